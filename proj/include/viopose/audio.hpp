#pragma once

#include <string>
#include <vector>

namespace viopose {

struct AudioClip {
  std::vector<double> samples;  // mono, [-1,1]
  int sample_rate = 16000;
};

// Magnitude spectrogram, row-major frames x bins.
struct Spectrogram {
  std::vector<double> values;
  int frames = 0;
  int bins = 0;

  double at(int f, int b) const { return values[static_cast<std::size_t>(f) * bins + b]; }
};

// Per-frame audio feature rows: [envelope | mfcc x20 | chroma x12 | peaks | rms].
struct FeatureMatrix {
  static constexpr int kColumns = 35;
  static constexpr int kEnvelope = 0;
  static constexpr int kMfcc = 1;
  static constexpr int kChroma = 21;
  static constexpr int kPeaks = 33;
  static constexpr int kRms = 34;

  std::vector<double> values;  // frames x 35
  int frames = 0;
  double feature_rate = 0;

  double at(int f, int c) const { return values[static_cast<std::size_t>(f) * kColumns + c]; }
  double& at(int f, int c) { return values[static_cast<std::size_t>(f) * kColumns + c]; }
  std::string to_csv() const;
};

// Autocorrelation tempogram: rows are analysis windows, columns a fixed BPM
// grid so tempograms from different frame rates stay comparable.
struct Tempogram {
  std::vector<double> values;  // frames x bpm bins, non-negative
  int frames = 0;
  std::vector<double> bpm_axis;
  double window_s = 0;

  double at(int f, int b) const {
    return values[static_cast<std::size_t>(f) * bpm_axis.size() + b];
  }
};

struct AudioFeatureConfig {
  int n_fft = 1024;
  bool chroma_smoothing = false;      // CENS-style moving average
  double chroma_smoothing_s = 0.4;
};

Spectrogram stft_mag(const AudioClip& clip, int n_fft, int hop);

// Half-wave rectified log-magnitude flux, averaged over bins; first frame 0.
std::vector<double> onset_envelope(const Spectrogram& spec);

// One-hot peaks: local maxima above mean + 1 sigma inside a +-0.15 s guard.
std::vector<double> pick_peaks(const std::vector<double>& envelope, double feature_rate);

// 40-band HTK mel filterbank -> log -> orthonormal DCT-II, first n_coeffs.
std::vector<double> mfcc(const Spectrogram& spec, int sample_rate, int n_coeffs = 20,
                         int n_mels = 40);
std::vector<std::vector<double>> mel_filterbank(int n_mels, int n_fft, int sample_rate);

// 12 energy pitch-class bins (A440 reference, C = class 0), L2-normalized.
// smoothing_half_frames > 0 applies CENS-style temporal averaging first.
std::vector<double> chroma(const Spectrogram& spec, int sample_rate,
                           int smoothing_half_frames = 0);

FeatureMatrix assemble_features(const AudioClip& clip, int feature_rate,
                                const AudioFeatureConfig& cfg = {});

// Windowed, mean-removed, biased autocorrelation mapped onto the BPM grid
// [30,300]; negative correlations are rectified to zero.
Tempogram tempogram(const std::vector<double>& envelope, double feature_rate, double window_s,
                    double hop_s = 0.5, int n_bpm_bins = 91);

// Shared grid/window arithmetic so audio- and pose-side tempograms align.
int tempogram_columns(double duration_s, double window_s, double hop_s);
std::vector<double> tempogram_bpm_axis(int n_bpm_bins);

}  // namespace viopose
