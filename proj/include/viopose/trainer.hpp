#pragma once

#include <optional>
#include <string>
#include <vector>

#include "viopose/analysis.hpp"
#include "viopose/checkpoint.hpp"
#include "viopose/dataset.hpp"
#include "viopose/metrics.hpp"

namespace viopose {

struct TrainResult {
  int epochs_run = 0;
  double first_train_loss = 0;
  double last_train_loss = 0;
  double best_val_mpjpe = 0;
  int best_epoch = -1;
  std::string best_checkpoint_dir;
  std::string log_path;
};

// Trains per the config; writes a JSON-lines log (train.log.jsonl), a
// last checkpoint, and the best-validation checkpoint under out_dir.
TrainResult train_model(const RunConfig& cfg, const std::string& dataset_dir,
                        const std::string& out_dir,
                        const std::string& resume_checkpoint = "");

// Forward + optional Kalman fusion for one prepared sample; returns the
// root-centered predicted pose (and raw dynamics if requested).
struct PredictedSample {
  PoseSequence pose;        // root-centered prediction
  PoseSequence pose_fused;  // Kalman-fused (equals pose when disabled)
  PoseSequence vel, acc;
};

PredictedSample predict_sample(const VioPoseModel& model, const PreparedSample& sample,
                               const RunConfig& cfg, bool use_kalman);

struct EvalResult {
  MetricsReport aggregate;
  std::vector<MetricsReport> per_sample;
  int samples = 0;
};

EvalResult evaluate_split(const VioPoseModel& model, const RunConfig& cfg,
                          const std::vector<std::string>& sample_dirs, bool use_kalman);

// Mean untrained-vs-ground-truth MPJPE with batch statistics (the model has
// no running stats before training).
double untrained_baseline_mpjpe(const VioPoseModel& model, const RunConfig& cfg,
                                const std::vector<std::string>& sample_dirs);

struct AnalyzeOptions {
  bool use_kalman = false;   // event tasks run on raw dynamics by default
  bool oracle = false;       // analyze ground-truth poses instead of predictions
  std::string plot_dir;      // empty = no plots
  double bow_window_s = 0.1;
  double vibrato_window_frames = 1.0;
  double edge_guard_s = 0.15;
};

struct AnalyzeResult {
  TaskScores scores;
  int samples = 0;
  int bow_samples = 0, vibrato_samples = 0, hold_samples = 0, straight_samples = 0;
};

AnalyzeResult analyze_split(const VioPoseModel* model, const RunConfig& cfg,
                            const std::vector<std::string>& sample_dirs,
                            const AnalyzeOptions& opts);

// Convert a (1,f,J,3) tensor to a PoseSequence.
PoseSequence tensor_to_pose(const Tensor& t, int batch_index, double fps);

}  // namespace viopose
