#pragma once

#include "viopose/sim.hpp"

namespace viopose {

// Per-joint, per-axis linear Kalman filter with state [p, v, a], constant-
// acceleration transition and the full dynamics triple as measurement.
// Units are mm, mm/frame, mm/frame^2 (dt = 1 frame).
struct KalmanParams {
  double sigma_q = 1.0;  // process noise on acceleration, mm/frame^2
  double r_pos = 25.0;   // mm^2
  double r_vel = 4.0;    // (mm/frame)^2
  double r_acc = 4.0;    // (mm/frame^2)^2
};

PoseSequence kalman_fuse(const PoseSequence& pos, const PoseSequence& vel,
                         const PoseSequence& acc, const KalmanParams& params = {});

}  // namespace viopose
