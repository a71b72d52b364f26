#pragma once

#include <functional>
#include <vector>

#include "viopose/tensor.hpp"

namespace viopose {

// Scalar-valued function of a list of leaf tensors.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares the tape gradient of fn at `point` against central differences
// (f(x+h_i) - f(x-h_i)) / 2h_i with h_i = h * (1 + |x_i|), and returns the
// maximum relative error |a - n| / max(1, |a|, |n|) over all checked
// coordinates. max_coords_per_tensor < 0 sweeps every coordinate; otherwise
// a deterministic stride keeps at most that many per tensor.
double grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double h,
                  std::int64_t max_coords_per_tensor = -1);

}  // namespace viopose
