#include "viopose/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace viopose {

void adam_step(ParamStore& params, AdamState& state) {
  if (state.lr <= 0) throw std::invalid_argument("adam: learning rate must be positive");

  // Validate all grads before mutating anything, so a bad step aborts whole.
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (double g : e.value.grad()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam: NaN gradient in parameter '" + e.name + "'");
      }
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    auto grad = e.value.grad();
    auto data = e.value.mutable_data();
    auto& m = state.m[e.name];
    auto& v = state.v[e.name];
    if (m.size() != data.size()) m.assign(data.size(), 0.0);
    if (v.size() != data.size()) v.assign(data.size(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace viopose
