#include "viopose/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

namespace viopose {
namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, in place.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double reflect_sample(const std::vector<double>& x, std::ptrdiff_t i) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return x[static_cast<std::size_t>(i)];
}

int pitch_class_a440(double freq_hz) {
  const int st = static_cast<int>(std::lround(12.0 * std::log2(freq_hz / 440.0)));
  return ((st % 12) + 12 + 9) % 12;  // A440 lands on class 9 (C = 0)
}

}  // namespace

Spectrogram stft_mag(const AudioClip& clip, int n_fft, int hop) {
  if (!is_pow2(n_fft)) throw std::invalid_argument("stft: n_fft must be a power of two");
  if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(clip.samples.size());
  if (len < n_fft / 2 + 1) {
    throw std::invalid_argument("stft: clip too short for reflect-centered analysis (" +
                                std::to_string(len) + " samples, n_fft " + std::to_string(n_fft) +
                                ")");
  }
  std::vector<double> window(n_fft);
  for (int i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n_fft - 1));
  }
  Spectrogram spec;
  spec.bins = n_fft / 2 + 1;
  spec.frames = 1 + static_cast<int>(len / hop);
  spec.values.assign(static_cast<std::size_t>(spec.frames) * spec.bins, 0.0);

  std::vector<std::complex<double>> buf(n_fft);
  for (int f = 0; f < spec.frames; ++f) {
    const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(f) * hop;
    for (int i = 0; i < n_fft; ++i) {
      buf[i] = reflect_sample(clip.samples, center - n_fft / 2 + i) * window[i];
    }
    fft_inplace(buf);
    for (int b = 0; b < spec.bins; ++b) {
      spec.values[static_cast<std::size_t>(f) * spec.bins + b] = std::abs(buf[b]);
    }
  }
  return spec;
}

std::vector<double> onset_envelope(const Spectrogram& spec) {
  std::vector<double> env(spec.frames, 0.0);
  for (int f = 1; f < spec.frames; ++f) {
    double acc = 0;
    for (int b = 0; b < spec.bins; ++b) {
      const double d = std::log1p(spec.at(f, b)) - std::log1p(spec.at(f - 1, b));
      if (d > 0) acc += d;
    }
    env[f] = acc / spec.bins;
  }
  return env;
}

std::vector<double> pick_peaks(const std::vector<double>& envelope, double feature_rate) {
  const int n = static_cast<int>(envelope.size());
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  double mean = 0;
  for (double v : envelope) mean += v;
  mean /= n;
  double var = 0;
  for (double v : envelope) var += (v - mean) * (v - mean);
  var /= n;
  const double thr = mean + std::sqrt(var);
  const int guard = std::max(1, static_cast<int>(std::lround(0.15 * feature_rate)));
  for (int i = 0; i < n; ++i) {
    if (!(envelope[i] > thr)) continue;
    bool is_peak = true;
    for (int j = std::max(0, i - guard); j <= std::min(n - 1, i + guard) && is_peak; ++j) {
      if (j == i) continue;
      // Earlier ties win so simultaneous maxima yield a single peak.
      if (envelope[j] > envelope[i] || (envelope[j] == envelope[i] && j < i)) is_peak = false;
    }
    if (is_peak) out[i] = 1.0;
  }
  return out;
}

std::vector<std::vector<double>> mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> f_pts(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    f_pts[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = f_pts[m], mid = f_pts[m + 1], hi = f_pts[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double freq = static_cast<double>(b) * sample_rate / n_fft;
      if (freq > lo && freq < mid) {
        fb[m][b] = (freq - lo) / (mid - lo);
      } else if (freq >= mid && freq < hi) {
        fb[m][b] = (hi - freq) / (hi - mid);
      }
    }
  }
  return fb;
}

std::vector<double> mfcc(const Spectrogram& spec, int sample_rate, int n_coeffs, int n_mels) {
  const auto fb = mel_filterbank(n_mels, (spec.bins - 1) * 2, sample_rate);
  std::vector<double> out(static_cast<std::size_t>(spec.frames) * n_coeffs, 0.0);
  std::vector<double> logmel(n_mels);
  for (int f = 0; f < spec.frames; ++f) {
    for (int m = 0; m < n_mels; ++m) {
      double e = 0;
      for (int b = 0; b < spec.bins; ++b) {
        const double mag = spec.at(f, b);
        e += fb[m][b] * mag * mag;
      }
      logmel[m] = std::log(e + 1e-10);
    }
    for (int k = 0; k < n_coeffs; ++k) {
      double acc = 0;
      for (int m = 0; m < n_mels; ++m) {
        acc += logmel[m] * std::cos(kPi * k * (2 * m + 1) / (2.0 * n_mels));
      }
      const double norm = k == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
      out[static_cast<std::size_t>(f) * n_coeffs + k] = norm * acc;
    }
  }
  return out;
}

std::vector<double> chroma(const Spectrogram& spec, int sample_rate,
                           int smoothing_half_frames) {
  const int n_fft = (spec.bins - 1) * 2;
  std::vector<double> out(static_cast<std::size_t>(spec.frames) * 12, 0.0);
  for (int f = 0; f < spec.frames; ++f) {
    double* row = out.data() + static_cast<std::size_t>(f) * 12;
    for (int b = 1; b < spec.bins; ++b) {
      const double freq = static_cast<double>(b) * sample_rate / n_fft;
      if (freq < 55.0) continue;
      const double mag = spec.at(f, b);
      row[pitch_class_a440(freq)] += mag * mag;
    }
  }
  if (smoothing_half_frames > 0) {
    const int half = smoothing_half_frames;
    std::vector<double> smooth(out.size(), 0.0);
    for (int f = 0; f < spec.frames; ++f) {
      const int lo = std::max(0, f - half), hi = std::min(spec.frames - 1, f + half);
      for (int c = 0; c < 12; ++c) {
        double acc = 0;
        for (int j = lo; j <= hi; ++j) acc += out[static_cast<std::size_t>(j) * 12 + c];
        smooth[static_cast<std::size_t>(f) * 12 + c] = acc / (hi - lo + 1);
      }
    }
    out.swap(smooth);
  }
  for (int f = 0; f < spec.frames; ++f) {
    double* row = out.data() + static_cast<std::size_t>(f) * 12;
    double norm = 0;
    for (int c = 0; c < 12; ++c) norm += row[c] * row[c];
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (int c = 0; c < 12; ++c) row[c] /= norm;
    }
  }
  return out;
}

FeatureMatrix assemble_features(const AudioClip& clip, int feature_rate,
                                const AudioFeatureConfig& cfg) {
  if (feature_rate != 30 && feature_rate != 100 && feature_rate != 300) {
    throw std::invalid_argument("assemble_features: unsupported feature rate " +
                                std::to_string(feature_rate) + " (expected 30, 100 or 300)");
  }
  const int sr = clip.sample_rate;
  const int hop = std::max(1, static_cast<int>(std::lround(static_cast<double>(sr) / feature_rate)));
  const Spectrogram full = stft_mag(clip, cfg.n_fft, hop);

  const int rows = static_cast<int>(std::llround(
      static_cast<double>(clip.samples.size()) * feature_rate / sr));
  if (rows < 2) throw std::invalid_argument("assemble_features: clip too short");

  // Map feature rows to the nearest analysis frame; avoids cumulative drift
  // when sr/feature_rate is not an integer.
  Spectrogram mapped;
  mapped.bins = full.bins;
  mapped.frames = rows;
  mapped.values.resize(static_cast<std::size_t>(rows) * full.bins);
  std::vector<std::ptrdiff_t> centers(rows);
  for (int t = 0; t < rows; ++t) {
    const double pos = static_cast<double>(t) * sr / feature_rate;
    int fi = static_cast<int>(std::lround(pos / hop));
    fi = std::clamp(fi, 0, full.frames - 1);
    centers[t] = static_cast<std::ptrdiff_t>(std::llround(pos));
    std::copy(full.values.begin() + static_cast<std::size_t>(fi) * full.bins,
              full.values.begin() + static_cast<std::size_t>(fi + 1) * full.bins,
              mapped.values.begin() + static_cast<std::size_t>(t) * full.bins);
  }

  const auto env = onset_envelope(mapped);
  const auto peaks = pick_peaks(env, feature_rate);
  const auto mf = mfcc(mapped, sr);
  const int smooth_half =
      cfg.chroma_smoothing
          ? std::max(1, static_cast<int>(std::lround(0.5 * cfg.chroma_smoothing_s * feature_rate)))
          : 0;
  const auto ch = chroma(mapped, sr, smooth_half);

  FeatureMatrix fm;
  fm.frames = rows;
  fm.feature_rate = feature_rate;
  fm.values.assign(static_cast<std::size_t>(rows) * FeatureMatrix::kColumns, 0.0);
  for (int t = 0; t < rows; ++t) {
    fm.at(t, FeatureMatrix::kEnvelope) = env[t];
    for (int k = 0; k < 20; ++k) fm.at(t, FeatureMatrix::kMfcc + k) = mf[static_cast<std::size_t>(t) * 20 + k];
    for (int c = 0; c < 12; ++c) fm.at(t, FeatureMatrix::kChroma + c) = ch[static_cast<std::size_t>(t) * 12 + c];
    fm.at(t, FeatureMatrix::kPeaks) = peaks[t];
    double acc = 0;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double s = reflect_sample(clip.samples, centers[t] - cfg.n_fft / 2 + i);
      acc += s * s;
    }
    fm.at(t, FeatureMatrix::kRms) = std::sqrt(acc / cfg.n_fft);
  }
  for (double v : fm.values) {
    if (!std::isfinite(v)) throw std::runtime_error("assemble_features: non-finite feature value");
  }
  return fm;
}

std::string FeatureMatrix::to_csv() const {
  std::ostringstream os;
  os << "envelope";
  for (int k = 0; k < 20; ++k) os << ",mfcc" << k;
  static const char* kNames[12] = {"C", "Cs", "D", "Ds", "E", "F", "Fs", "G", "Gs", "A", "As", "B"};
  for (const char* n : kNames) os << ",chroma_" << n;
  os << ",peaks,rms\n";
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(12);
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < kColumns; ++c) {
      if (c) os << ',';
      os << at(f, c);
    }
    os << '\n';
  }
  return os.str();
}

int tempogram_columns(double duration_s, double window_s, double hop_s) {
  if (window_s > duration_s + 1e-9) {
    throw std::invalid_argument("tempogram: window longer than signal (" +
                                std::to_string(window_s) + " s vs " +
                                std::to_string(duration_s) + " s)");
  }
  return static_cast<int>(std::floor((duration_s - window_s) / hop_s + 1e-9)) + 1;
}

std::vector<double> tempogram_bpm_axis(int n_bpm_bins) {
  std::vector<double> axis(n_bpm_bins);
  for (int k = 0; k < n_bpm_bins; ++k) {
    axis[k] = 30.0 + (300.0 - 30.0) * k / (n_bpm_bins - 1);
  }
  return axis;
}

Tempogram tempogram(const std::vector<double>& envelope, double feature_rate, double window_s,
                    double hop_s, int n_bpm_bins) {
  const double dur = static_cast<double>(envelope.size()) / feature_rate;
  const int cols = tempogram_columns(dur, window_s, hop_s);
  const int W = std::max(2, static_cast<int>(std::lround(window_s * feature_rate)));
  if (W > static_cast<int>(envelope.size())) {
    throw std::invalid_argument("tempogram: window longer than envelope");
  }

  Tempogram tg;
  tg.bpm_axis = tempogram_bpm_axis(n_bpm_bins);
  tg.frames = cols;
  tg.window_s = window_s;
  tg.values.assign(static_cast<std::size_t>(cols) * n_bpm_bins, 0.0);

  std::vector<double> autoc(W, 0.0);
  for (int j = 0; j < cols; ++j) {
    int start = static_cast<int>(std::lround(j * hop_s * feature_rate));
    start = std::min(start, static_cast<int>(envelope.size()) - W);
    double mu = 0;
    for (int t = 0; t < W; ++t) mu += envelope[start + t];
    mu /= W;
    for (int L = 1; L < W; ++L) {
      double acc = 0;
      for (int t = 0; t + L < W; ++t) {
        acc += (envelope[start + t] - mu) * (envelope[start + t + L] - mu);
      }
      autoc[L] = acc / W;  // biased: periodic trains peak at the fundamental lag
    }
    for (int k = 0; k < n_bpm_bins; ++k) {
      const double lag = 60.0 * feature_rate / tg.bpm_axis[k];
      const int lo = static_cast<int>(std::floor(lag));
      double v = 0;
      if (lo >= 1 && lo + 1 < W) {
        const double w = lag - lo;
        v = (1.0 - w) * autoc[lo] + w * autoc[lo + 1];
      } else if (lo >= 1 && lo < W) {
        v = autoc[lo];
      }
      tg.values[static_cast<std::size_t>(j) * n_bpm_bins + k] = std::max(0.0, v);
    }
  }
  return tg;
}

}  // namespace viopose
