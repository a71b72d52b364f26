#pragma once

#include <array>
#include <string>
#include <vector>

#include "viopose/sim.hpp"

namespace viopose {

using Mat3x3 = std::array<std::array<double, 3>, 3>;

struct MetricsReport {
  double mpjpe = 0;    // mm
  double p_mpjpe = 0;  // mm
  double mpjve = 0;    // mm/frame
  double mpjae = 0;    // mm/frame^2
  double dtw = 0;      // path-length normalized
  std::vector<double> per_joint_mpjpe;
  std::vector<std::string> joint_names;
  int degenerate_frames_skipped = 0;

  std::string to_json() const;
  std::string per_joint_csv() const;
};

// Mean over frames and joints of per-joint Euclidean distance. Both inputs
// must already share the same root reference.
double mpjpe(const PoseSequence& pred, const PoseSequence& gt);
std::vector<double> per_joint_mpjpe(const PoseSequence& pred, const PoseSequence& gt);

struct SimilarityTransform {
  double scale = 1;
  Mat3x3 rotation{};  // proper rotation, det = +1
  Vec3 translation{};

  Vec3 apply(const Vec3& p) const;
};

// Least-squares similarity aligning A onto B (s*R*A + t ~ B). Throws on
// degenerate input (all points coincident or collinear).
SimilarityTransform procrustes_align(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Per-frame Procrustes alignment, then MPJPE. Degenerate frames are skipped
// and counted.
double p_mpjpe(const PoseSequence& pred, const PoseSequence& gt, int* skipped = nullptr);

// MPJPE of order-th temporal derivatives (1 = velocity, 2 = acceleration),
// per-frame units.
double derivative_error(const PoseSequence& pred, const PoseSequence& gt, int order);

struct DtwResult {
  double total = 0;      // summed local cost along the optimal path
  int path_len = 0;
  double normalized = 0; // total / path_len
};

DtwResult dtw_pair(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Root-centered per-joint DTW, normalized by path length, averaged over
// joints.
double dtw(const PoseSequence& pred, const PoseSequence& gt);

// Subtracts the root from every joint per frame: mid-shoulder when shoulders
// are present (8-joint layout), centroid otherwise.
PoseSequence root_centered(const PoseSequence& pose);

MetricsReport compute_metrics(const PoseSequence& pred, const PoseSequence& gt,
                              const std::vector<std::string>& names = {});

// Shared 3x3 symmetric eigging: eigenvalues ascending with eigenvectors as rows.
void symmetric_eig3(const Mat3x3& m, std::array<double, 3>& eigvals,
                    Mat3x3& eigvecs_rows);

}  // namespace viopose
