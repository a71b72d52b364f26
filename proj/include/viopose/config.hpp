#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "viopose/kalman.hpp"
#include "viopose/losses.hpp"
#include "viopose/model.hpp"

namespace viopose {

struct RunConfig {
  ModelConfig model;
  LossConfig loss;

  // Optimizer schedule: lr until the first milestone, then the listed values.
  double lr = 1e-3;
  std::vector<std::pair<int, double>> lr_milestones = {{50, 5e-4}, {100, 1e-4}};
  int epochs = 150;
  int batch = 64;

  // Data generation.
  double window_s = 3.0;
  double hop_s = 1.0;
  int sample_rate = 16000;
  int participants = 3;
  int clips_per_participant = 4;
  double clip_duration_s = 8.0;
  std::string style = "piece";  // "exercise" or "piece"
  double noise_sigma_px = 2.0;
  double occlusion_rate = 0.0;
  double test_fraction = 0.3;  // whole participants held out
  double val_fraction = 0.1;   // of the remaining windows
  std::vector<std::string> joint_subset;  // empty = all 8 joints

  std::uint64_t seed = 0;

  bool kalman = true;
  KalmanParams kalman_params;

  // Derived sizes.
  int frames() const;        // f = window_s * fps
  int audio_frames() const;  // F = window_s * feature_rate

  void validate() const;
  // Re-derives model.frames/audio_frames/joints from the data settings.
  void finalize();

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);

  static RunConfig defaults();
  static RunConfig tiny();  // CI preset
};

// VIOPOSE_SEED, when set, overrides the config seed.
void apply_env_seed(RunConfig& cfg);

double lr_at_epoch(const RunConfig& cfg, int epoch);

}  // namespace viopose
