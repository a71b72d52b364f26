#pragma once

#include <string>
#include <vector>

#include "viopose/gradcheck.hpp"

namespace viopose {

struct CheckResult {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool ok() const { return max_rel_err < tolerance; }
};

// Central-difference checks for every autodiff primitive at 10 seeded random
// points each (h = 1e-5 * (1 + |x|)).
std::vector<CheckResult> run_primitive_gradchecks(std::uint64_t seed = 12345);

// Full forward + loss at a tiny configuration (D=16, f=12, J=3).
CheckResult run_model_gradcheck(const std::string& loss_variant, std::uint64_t seed = 12345);

}  // namespace viopose
