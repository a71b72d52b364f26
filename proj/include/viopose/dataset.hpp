#pragma once

#include <string>
#include <vector>

#include "viopose/config.hpp"
#include "viopose/sim.hpp"

namespace viopose {

// Cuts a full-clip sample into analysis windows; events are shifted into
// window-relative time.
std::vector<Sample> window_sample(const Sample& clip, double window_s, double hop_s);

// How many windows a clip of the given duration yields.
int window_count(double clip_s, double window_s, double hop_s);

// Writes the synthetic dataset: one directory per window, split by
// participant (test holds out whole participants).
void generate_dataset(const RunConfig& cfg, const std::string& out_dir, bool force = false);

struct DatasetIndex {
  std::vector<std::string> train_dirs, val_dirs, test_dirs;
};

DatasetIndex load_dataset_index(const std::string& dir);

// A sample prepared for the model: normalized 2D keypoints, audio features,
// and root-centered ground-truth dynamics (per-frame units).
struct PreparedSample {
  Sample raw;                     // after joint-subset selection
  std::vector<double> kp2d_norm;  // f x J x 2 in [-1,1]
  FeatureMatrix features;         // F x 35
  PoseSequence gt_centered;
  PoseSequence gt_vel, gt_acc;
  Tempogram gt_tempogram;         // from the audio onset envelope
  bool has_tempogram = false;
};

PreparedSample prepare_sample(const Sample& sample, const RunConfig& cfg,
                              bool with_tempogram);
PreparedSample load_prepared(const std::string& dir, const RunConfig& cfg, bool with_tempogram);

// Stacks prepared samples into batch tensors.
struct Batch {
  Tensor kp2d;      // (b,f,J,2)
  Tensor features;  // (b,F,35); undefined when audio is off
  Tensor gt_pose, gt_vel, gt_acc;
  Tensor gt_tempo;  // (b,C,K); undefined unless requested
};

Batch make_batch(const std::vector<const PreparedSample*>& samples, const RunConfig& cfg);

// Applies the config's joint subset to a sample (pose, kp2d, names).
Sample select_joints(const Sample& sample, const std::vector<std::string>& subset);

}  // namespace viopose
