#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "viopose/nn.hpp"

namespace viopose {

// Adam with bias correction. Moment arrays are keyed by parameter name so
// the optimizer survives checkpoint round-trips of the same model layout.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::unordered_map<std::string, std::vector<double>> m, v;
};

// Applies one update from the grads currently stored on the trainable
// parameters. Throws if any gradient is non-finite, naming the parameter.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace viopose
