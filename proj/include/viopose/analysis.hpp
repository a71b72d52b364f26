#pragma once

#include <string>
#include <vector>

#include "viopose/sim.hpp"

namespace viopose {

using Traj = std::vector<Vec3>;

struct EventList {
  std::vector<double> times;  // seconds, ascending
};

struct TaskScores {
  double bow_dir_pct = 0;
  double straight_bow_pct = 0;
  double violin_hold_pct = 0;
  double vibrato_pct = 0;
  double hold_mean_l1_deg = 0;

  std::string to_json() const;
  std::string to_table() const;  // text table, one row
};

// Second-order Butterworth applied forward-backward (zero phase).
Traj lowpass(const Traj& traj, double fps, double cutoff_hz);
std::vector<double> lowpass_1d(const std::vector<double>& x, double fps, double cutoff_hz);
Traj bandpass(const Traj& traj, double fps, double low_hz, double high_hz);

// Bow-direction changes: 5 Hz lowpass, projection onto the principal axis,
// zero crossings of the projected velocity.
EventList segment_bow_changes(const Traj& right_wrist, double fps);

// Greedy one-to-one matching within +-window_s; F1 * 100. Two empty lists
// count as a perfect match.
double score_events(const EventList& pred, const EventList& gt, double window_s);

// Drops events within guard_s of either end of [0, duration_s].
EventList filter_events(const EventList& events, double duration_s, double guard_s);

// Per stroke: max perpendicular deviation from the least-squares 3D line;
// "straight" iff below threshold_mm. Returns % of strokes whose predicted
// classification matches the ground-truth poses' classification.
double straight_bow_score(const Traj& pred_wrist, const Traj& gt_wrist, const EventList& events,
                          double fps, double threshold_mm = 15.0, int min_stroke_frames = 5);
double max_line_deviation(const Traj& points, int begin, int end);

// Interior wrist angle between (wrist->elbow) and (wrist->hand), degrees;
// 180 for a straight arm. Frames with a zero-length bone yield NaN.
std::vector<double> flexion_angle_series(const Traj& elbow, const Traj& wrist, const Traj& hand);

struct HoldResult {
  std::vector<double> angles_deg;
  double mean_l1_deg = 0;
  double within_pct = 0;  // % of frames within tolerance
};

HoldResult violin_hold_flexion(const Traj& pred_elbow, const Traj& pred_wrist,
                               const Traj& pred_hand, const Traj& gt_elbow, const Traj& gt_wrist,
                               const Traj& gt_hand, double tolerance_deg = 10.0);

// 4-9 Hz bandpassed mid-point of the left wrist and hand; direction-change
// events from projected-velocity zero crossings.
EventList detect_vibrato(const Traj& left_wrist, const Traj& left_hand, double fps);

}  // namespace viopose
