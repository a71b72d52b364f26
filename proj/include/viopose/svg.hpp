#pragma once

#include <string>
#include <vector>

#include "viopose/audio.hpp"
#include "viopose/sim.hpp"

namespace viopose {

// Predicted vs ground-truth trajectory, one panel per axis over time.
void write_trajectory_svg(const std::string& path, const std::vector<Vec3>& pred,
                          const std::vector<Vec3>& gt, double fps, const std::string& title);

// Grayscale heatmap pair (ground truth above, prediction below).
void write_tempogram_svg(const std::string& path, const Tempogram& gt, const Tempogram& pred,
                         const std::string& title);

}  // namespace viopose
