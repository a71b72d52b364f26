#include "viopose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "viopose/checks.hpp"
#include "viopose/config.hpp"
#include "viopose/dataset.hpp"
#include "viopose/nn.hpp"
#include "viopose/ops.hpp"

namespace viopose {

double grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double h,
                  std::int64_t max_coords_per_tensor) {
  // Analytic gradients.
  std::vector<Tensor> leaves = point;
  for (Tensor& t : leaves) {
    t.node()->requires_grad = true;
    t.zero_grad();
  }
  Tensor loss = fn(leaves);
  if (loss.numel() != 1) throw std::invalid_argument("grad_check: fn must be scalar-valued");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& t : leaves) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  double max_rel = 0.0;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < leaves.size(); ++ti) {
    Tensor& t = leaves[ti];
    auto data = t.mutable_data();
    const std::int64_t n = static_cast<std::int64_t>(data.size());
    std::int64_t stride = 1;
    if (max_coords_per_tensor > 0 && n > max_coords_per_tensor) {
      stride = (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
    }
    for (std::int64_t i = 0; i < n; i += stride) {
      const double x0 = data[i];
      const double hi = h * (1.0 + std::abs(x0));
      data[i] = x0 + hi;
      const double fp = fn(leaves).item();
      data[i] = x0 - hi;
      const double fm = fn(leaves).item();
      data[i] = x0;
      const double numeric = (fp - fm) / (2.0 * hi);
      const double a = analytic[ti][static_cast<std::size_t>(i)];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Keeps values away from non-differentiable kinks (relu at 0, ties in max).
Tensor random_signed_offset(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Scalarizes through a fixed random weighting so every output coordinate
// contributes a distinct gradient.
Tensor weighted_mean(const Tensor& y, Rng& rng) {
  Tensor w = Tensor::zeros(y.shape());
  for (double& v : w.mutable_data()) v = rng.uniform(-1.0, 1.0);
  return mean_all(mul(y, w));
}

CheckResult check_op(const std::string& name, double tol, int repeats, Rng& rng,
                     const std::function<double(Rng&)>& one) {
  CheckResult res{name, 0.0, tol};
  for (int r = 0; r < repeats; ++r) res.max_rel_err = std::max(res.max_rel_err, one(rng));
  return res;
}

}  // namespace

std::vector<CheckResult> run_primitive_gradchecks(std::uint64_t seed) {
  const double h = 1e-5;
  const double tol = 1e-5;
  const int reps = 10;
  Rng rng(seed);
  std::vector<CheckResult> out;

  out.push_back(check_op("add", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 3, 4}, r), b = random_tensor({3, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(add(in[0], in[1]), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("sub", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({4, 5}, r), b = random_tensor({4, 5}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(sub(in[0], in[1]), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("multiply", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 4}, r), b = random_tensor({3, 2, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(mul(in[0], in[1]), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("divide", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({3, 4}, r);
    auto b = random_signed_offset({3, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(divide(in[0], in[1]), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("maximum", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({5, 3}, r), b = random_tensor({5, 3}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(maximum(in[0], in[1]), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("scale_add_scalar", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({6}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(add_scalar(scale(in[0], 1.7), -0.3), r);
    }, {a}, h);
  }));
  out.push_back(check_op("relu", tol, reps, rng, [&](Rng& r) {
    auto a = random_signed_offset({4, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(relu(in[0]), r);
    }, {a}, h);
  }));
  out.push_back(check_op("gelu", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({4, 4}, r, -2, 2);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(gelu(in[0]), r);
    }, {a}, h);
  }));
  out.push_back(check_op("sqrt", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({4, 4}, r, 0.2, 2.0);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(sqrt_op(in[0]), r);
    }, {a}, h);
  }));
  out.push_back(check_op("softmax", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({3, 5}, r, -2, 2);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(softmax(in[0], -1), r);
    }, {a}, h);
  }));
  out.push_back(check_op("layer_norm", tol, reps, rng, [&](Rng& r) {
    auto x = random_tensor({3, 6}, r);
    auto g = random_tensor({6}, r, 0.5, 1.5);
    auto b = random_tensor({6}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(layer_norm(in[0], in[1], in[2], 1e-5), r);
    }, {x, g, b}, h);
  }));
  out.push_back(check_op("batch_norm_bt", tol, reps, rng, [&](Rng& r) {
    ParamStore ps;
    BatchNormBT bn = BatchNormBT::create(ps, "bn", 4);
    auto x = random_tensor({3, 5, 4}, r);
    auto g = random_tensor({4}, r, 0.5, 1.5);
    auto b = random_tensor({4}, r);
    std::copy(g.data().begin(), g.data().end(), bn.gamma.mutable_data().begin());
    std::copy(b.data().begin(), b.data().end(), bn.beta.mutable_data().begin());
    return grad_check([&](const std::vector<Tensor>& in) {
      BatchNormBT local = bn;
      local.gamma = in[1];
      local.beta = in[2];
      return weighted_mean(local.forward(in[0], BatchNormMode::Frozen), r);
    }, {x, bn.gamma, bn.beta}, h);
  }));
  out.push_back(check_op("matmul", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 3, 4}, r), b = random_tensor({4, 5}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(matmul(in[0], in[1]), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("conv1d", tol, reps, rng, [&](Rng& r) {
    auto x = random_tensor({2, 3, 8}, r), k = random_tensor({4, 3, 3}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(conv1d(in[0], in[1], 1), r);
    }, {x, k}, h);
  }));
  out.push_back(check_op("concat_slice", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 3, 4}, r), b = random_tensor({2, 2, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      Tensor c = concat({in[0], in[1]}, 1);
      return weighted_mean(slice_axis(c, 1, 1, 3), r);
    }, {a, b}, h);
  }));
  out.push_back(check_op("reshape_transpose", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 3, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(transpose(reshape(in[0], {2, 2, 6}), 0, 2), r);
    }, {a}, h);
  }));
  out.push_back(check_op("reductions", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({3, 4}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      Tensor s = add(sum_last(in[0]), scale(add(sum_all(in[0]), mean_all(in[0])), 0.5));
      return weighted_mean(s, r);
    }, {a}, h);
  }));
  out.push_back(check_op("cumsum_time", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 6, 3}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(cumsum_time(in[0], 1), r);
    }, {a}, h);
  }));
  out.push_back(check_op("diff_time", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 7, 3}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(diff_time(in[0], 1, 0.5), r);
    }, {a}, h);
  }));
  out.push_back(check_op("resample_linear_time", tol, reps, rng, [&](Rng& r) {
    auto a = random_tensor({2, 9, 3}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted_mean(resample_linear_time(in[0], 1, 4), r);
    }, {a}, h);
  }));
  out.push_back(check_op("max_cosine_loss", tol, reps, rng, [&](Rng& r) {
    auto p = random_tensor({5, 3}, r), t = random_tensor({5, 3}, r);
    return grad_check([&](const std::vector<Tensor>& in) {
      return max_cosine_loss(in[0], in[1]);
    }, {p, t}, h);
  }));
  return out;
}

CheckResult run_model_gradcheck(const std::string& loss_variant, std::uint64_t seed) {
  RunConfig cfg;
  cfg.model.dim = 16;
  cfg.model.heads = 4;
  cfg.model.ffn_dim = 32;
  cfg.model.pose_blocks = 2;
  cfg.model.hierarchy_blocks = 2;
  cfg.model.fps = 10;
  cfg.model.feature_rate = 30;
  cfg.window_s = 1.2;
  cfg.joint_subset = {"l_wrist", "r_wrist", "r_hand"};
  cfg.loss.variant = loss_variant;
  cfg.loss.tempo_window_s = 1.0;
  cfg.loss.tempo_hop_s = 0.1;
  cfg.finalize();

  VioPoseModel model(cfg.model, seed);
  Rng rng(Rng::derive(seed, 0xF00D));
  const int b = 1, f = cfg.model.frames, J = cfg.model.joints, F = cfg.model.audio_frames;

  Tensor kp2d = random_tensor({b, f, J, 2}, rng);
  Tensor features = random_tensor({b, F, 35}, rng, 0.0, 1.0);
  Tensor gt_pose = random_tensor({b, f, J, 3}, rng, -50, 50);
  Tensor gt_vel = random_tensor({b, f, J, 3}, rng, -5, 5);
  Tensor gt_acc = random_tensor({b, f, J, 3}, rng, -2, 2);
  Tensor gt_tempo;
  if (loss_variant == "appendix") {
    const int cols = tempogram_columns(cfg.window_s, cfg.loss.tempo_window_s, cfg.loss.tempo_hop_s);
    gt_tempo = random_tensor({b, cols, cfg.loss.tempo_bpm_bins}, rng, 0.0, 1.0);
  }

  std::vector<Tensor> leaves;
  for (auto& e : model.params().entries()) {
    if (e.trainable) leaves.push_back(e.value);
  }

  const int rw = 1;  // r_wrist within the subset
  auto fn = [&](const std::vector<Tensor>&) {
    Tensor e_audio_final;
    DynamicsTriple triple = model.forward(kp2d, features, BatchNormMode::Frozen, &e_audio_final);
    if (loss_variant == "main") {
      return total_loss_main(triple, gt_pose, gt_vel, gt_acc, cfg.loss);
    }
    Tensor p2a = model.audio_pose_forward(e_audio_final);
    Tensor pose_tempo = pose_tempogram(triple.pose, rw, cfg.model.fps, cfg.loss.tempo_window_s,
                                       cfg.loss.tempo_hop_s, cfg.loss.tempo_bpm_bins);
    return total_loss_appendix(triple, gt_pose, gt_vel, gt_acc, p2a, pose_tempo, gt_tempo,
                               cfg.loss);
  };

  CheckResult res{"model_loss_" + loss_variant, 0.0, 1e-4};
  res.max_rel_err = grad_check(fn, leaves, 1e-5);
  return res;
}

}  // namespace viopose
