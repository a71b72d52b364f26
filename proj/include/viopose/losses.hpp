#pragma once

#include <string>

#include "viopose/audio.hpp"
#include "viopose/model.hpp"

namespace viopose {

struct LossConfig {
  std::string variant = "main";  // "main" or "appendix"
  // Main variant: L = MPJPE(p) + lambda_v * maxcos(v) + lambda_a * maxcos(a).
  double lambda_v = 1.0;
  double lambda_a = 1.0;
  // Appendix variant: L = 0.85*MPJPE + 0.1*MPJVE + 0.15*MPJAE
  //                     + lambda_A * P2A + lambda_C * cycle.
  double lambda_p1 = 0.85;
  double lambda_p2 = 0.1;
  double lambda_p3 = 0.15;
  double lambda_A = 0.15;
  double lambda_C = 20.0;
  double tempo_window_s = 2.0;
  double tempo_hop_s = 0.5;
  int tempo_bpm_bins = 91;

  void validate() const;
};

struct LossBreakdown {
  double total = 0;
  double pose = 0;   // MPJPE term
  double vel = 0;    // cosine term (main) / MPJVE (appendix)
  double acc = 0;    // cosine term (main) / MPJAE (appendix)
  double p2a = 0;
  double cycle = 0;
};

// Mean over batch/frames/joints of the per-joint Euclidean distance (mm).
Tensor mpjpe_loss(const Tensor& pred, const Tensor& gt);

Tensor total_loss_main(const DynamicsTriple& triple, const Tensor& gt_pose, const Tensor& gt_vel,
                       const Tensor& gt_acc, const LossConfig& cfg,
                       LossBreakdown* breakdown = nullptr);

// audio_pose_pred may be undefined (audio disabled): the P2A term is zero
// with a warning. pose_tempo/gt_tempo must be provided when lambda_C > 0.
Tensor total_loss_appendix(const DynamicsTriple& triple, const Tensor& gt_pose,
                           const Tensor& gt_vel, const Tensor& gt_acc,
                           const Tensor& audio_pose_pred, const Tensor& pose_tempo,
                           const Tensor& gt_tempo, const LossConfig& cfg,
                           LossBreakdown* breakdown = nullptr);

// Differentiable autocorrelation tempogram of right-wrist speed, (b,C,K);
// mirrors audiofeat's tempogram (mean-removed, biased, rectified).
Tensor pose_tempogram(const Tensor& pose, int right_wrist_joint, double fps, double window_s,
                      double hop_s = 0.5, int n_bpm_bins = 91);

// Stacks per-sample ground-truth tempograms into a constant (b,C,K) tensor.
Tensor tempograms_to_tensor(const std::vector<Tempogram>& tgs);

// Mean squared difference of per-sample mean-normalized tempograms.
Tensor tempogram_cycle_loss(const Tensor& pose_tempo, const Tensor& gt_tempo);

}  // namespace viopose
