#pragma once

#include "viopose/tensor.hpp"

namespace viopose {

// Elementwise with numpy-style broadcasting (align right, extent-1 stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sqrt_op(const Tensor& x);  // d/dx at 0 defined as 0

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation (no kernel flip), zero same-padding, t' = ceil(t/stride).
// x: (b, c_in, t), kernels: (c_out, c_in, k).
Tensor conv1d(const Tensor& x, const Tensor& kernels, int stride);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_axis(const Tensor& x, int axis, int start, int len);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose(const Tensor& x, int axis_a, int axis_b);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_last(const Tensor& x);

// Inclusive cumulative sum along `axis`.
Tensor cumsum_time(const Tensor& x, int axis);
// Central differences on the interior, second-order one-sided at the ends
// (exact for quadratics); requires extent >= 3 along `axis`.
Tensor diff_time(const Tensor& x, int axis, double dt);
// Linear temporal resampling along `axis` to new_len (endpoints aligned).
Tensor resample_linear_time(const Tensor& x, int axis, int new_len);

// Mean over vectors (last axis) of 1 - s, where s is the max-normalized
// cosine similarity s = pred.tgt / max(|pred|,|tgt|)^2. Both vectors zero
// gives s = 1; exactly one zero gives s = 0.
Tensor max_cosine_loss(const Tensor& pred, const Tensor& tgt);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace viopose
