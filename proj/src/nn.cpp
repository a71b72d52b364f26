#include "viopose/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace viopose {

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  // xoshiro256**
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  // Box-Muller; discards the spare to keep streams position-independent.
  double u1 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t st = seed ^ (0x632be59bd9b4e019ULL + stream * 0x9e3779b97f4a7c15ULL);
  return splitmix64(st);
}

Tensor ParamStore::add_param(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("param store: duplicate name " + name);
  t.node()->requires_grad = true;
  t.node()->ensure_grad();
  index_[name] = entries_.size();
  entries_.push_back({name, t, true});
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("param store: duplicate name " + name);
  index_[name] = entries_.size();
  entries_.push_back({name, t, false});
  return t;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("param store: unknown name " + name);
  return entries_[it->second].value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("param store: unknown name " + name);
  return entries_[it->second].value;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

std::int64_t ParamStore::count_trainable() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.value.numel();
  }
  return n;
}

std::int64_t ParamStore::count_all() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) {
    if (e.trainable) e.value.zero_grad();
  }
}

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.normal(0.0, stddev);
  return t;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.weight = ps.add_param(name + ".weight", glorot_uniform({in, out}, in, out, rng));
  l.bias = ps.add_param(name + ".bias", Tensor::zeros({out}));
  return l;
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

Conv1dLayer Conv1dLayer::create(ParamStore& ps, const std::string& name, int c_in, int c_out,
                                int k, int stride, Rng& rng) {
  Conv1dLayer c;
  c.kernels = ps.add_param(name + ".kernels",
                           glorot_uniform({c_out, c_in, k}, c_in * k, c_out * k, rng));
  c.bias = ps.add_param(name + ".bias", Tensor::zeros({c_out, 1}));
  c.stride = stride;
  return c;
}

Tensor Conv1dLayer::forward(const Tensor& x) const {
  return add(conv1d(x, kernels, stride), bias);
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps, const std::string& name, int dim,
                                              int heads, Rng& rng) {
  if (dim % heads != 0) {
    throw std::invalid_argument("attention: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  MultiHeadAttention a;
  a.wq = Linear::create(ps, name + ".q", dim, dim, rng);
  a.wk = Linear::create(ps, name + ".k", dim, dim, rng);
  a.wv = Linear::create(ps, name + ".v", dim, dim, rng);
  a.wo = Linear::create(ps, name + ".o", dim, dim, rng);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& kv_in) const {
  const int b = q_in.dim(0), fq = q_in.dim(1), d = q_in.dim(2);
  const int fk = kv_in.dim(1);
  const int dh = d / heads;
  auto split = [&](const Tensor& t, int f) {
    return transpose(reshape(t, {b, f, heads, dh}), 1, 2);  // (b,H,f,dh)
  };
  Tensor q = split(wq.forward(q_in), fq);
  Tensor k = split(wk.forward(kv_in), fk);
  Tensor v = split(wv.forward(kv_in), fk);
  Tensor scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = softmax(scores, -1);
  Tensor ctx = matmul(attn, v);                           // (b,H,fq,dh)
  Tensor merged = reshape(transpose(ctx, 1, 2), {b, fq, d});
  return wo.forward(merged);
}

TransformerBlock TransformerBlock::create(ParamStore& ps, const std::string& name, int dim,
                                          int heads, int ffn_dim, Rng& rng) {
  TransformerBlock blk;
  blk.mha = MultiHeadAttention::create(ps, name + ".mha", dim, heads, rng);
  blk.ffn_in = Linear::create(ps, name + ".ffn_in", dim, ffn_dim, rng);
  blk.ffn_out = Linear::create(ps, name + ".ffn_out", ffn_dim, dim, rng);
  blk.ln1_gamma = ps.add_param(name + ".ln1.gamma", Tensor::full({dim}, 1.0));
  blk.ln1_beta = ps.add_param(name + ".ln1.beta", Tensor::zeros({dim}));
  blk.ln2_gamma = ps.add_param(name + ".ln2.gamma", Tensor::full({dim}, 1.0));
  blk.ln2_beta = ps.add_param(name + ".ln2.beta", Tensor::zeros({dim}));
  return blk;
}

Tensor TransformerBlock::forward(const Tensor& x) const {
  Tensor h = add(x, mha.forward(layer_norm(x, ln1_gamma, ln1_beta, ln_eps),
                                layer_norm(x, ln1_gamma, ln1_beta, ln_eps)));
  Tensor f = ffn_out.forward(gelu(ffn_in.forward(layer_norm(h, ln2_gamma, ln2_beta, ln_eps))));
  return add(h, f);
}

Tensor TransformerBlock::forward_cross(const Tensor& x, const Tensor& kv) const {
  Tensor h = add(x, mha.forward(layer_norm(x, ln1_gamma, ln1_beta, ln_eps),
                                layer_norm(kv, ln1_gamma, ln1_beta, ln_eps)));
  Tensor f = ffn_out.forward(gelu(ffn_in.forward(layer_norm(h, ln2_gamma, ln2_beta, ln_eps))));
  return add(h, f);
}

BatchNormBT BatchNormBT::create(ParamStore& ps, const std::string& name, int channels) {
  BatchNormBT bn;
  bn.gamma = ps.add_param(name + ".gamma", Tensor::full({channels}, 1.0));
  bn.beta = ps.add_param(name + ".beta", Tensor::zeros({channels}));
  bn.running_mean = ps.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
  bn.running_var = ps.add_buffer(name + ".running_var", Tensor::full({channels}, 1.0));
  bn.steps = ps.add_buffer(name + ".steps", Tensor::zeros({1}));
  return bn;
}

Tensor BatchNormBT::forward(const Tensor& x, BatchNormMode mode) const {
  const int D = x.dim(-1);
  if (gamma.numel() != D) {
    throw std::invalid_argument("batch_norm: channel mismatch: " + shape_str(x.shape()));
  }
  const std::int64_t rows = x.numel() / D;

  std::vector<double> mu(D), var(D);
  if (mode == BatchNormMode::Eval) {
    if (steps.item() == 0.0) {
      throw std::runtime_error("batch_norm: uninitialized running stats (eval before any train step)");
    }
    std::copy(running_mean.data().begin(), running_mean.data().end(), mu.begin());
    std::copy(running_var.data().begin(), running_var.data().end(), var.begin());
  } else {
    if (rows < 2) {
      throw std::invalid_argument("batch_norm: train mode requires batch*time >= 2, got " +
                                  std::to_string(rows));
    }
    const auto xd = x.data();
    for (int c = 0; c < D; ++c) {
      double m = 0;
      for (std::int64_t r = 0; r < rows; ++r) m += xd[r * D + c];
      m /= static_cast<double>(rows);
      double v = 0;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double d = xd[r * D + c] - m;
        v += d * d;
      }
      v /= static_cast<double>(rows);
      mu[c] = m;
      var[c] = v;
    }
    if (mode == BatchNormMode::Train) {
      auto rm = const_cast<Tensor&>(running_mean).mutable_data();
      auto rv = const_cast<Tensor&>(running_var).mutable_data();
      const double unbias = rows > 1 ? static_cast<double>(rows) / (rows - 1) : 1.0;
      for (int c = 0; c < D; ++c) {
        rm[c] = (1.0 - momentum) * rm[c] + momentum * mu[c];
        rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c] * unbias;
      }
      const_cast<Tensor&>(steps).mutable_data()[0] += 1.0;
    }
  }

  std::vector<double> rstd(D);
  for (int c = 0; c < D; ++c) rstd[c] = 1.0 / std::sqrt(var[c] + eps);

  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const auto xd = x.data();
  const auto gd = gamma.data(), bd = beta.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int c = 0; c < D; ++c) {
      out[r * D + c] = (xd[r * D + c] - mu[c]) * rstd[c] * gd[c] + bd[c];
    }
  }

  auto xn = x.node();
  auto gn = gamma.node(), bn_ = beta.node();
  const bool batch_stats = mode != BatchNormMode::Eval;
  auto backward = [xn, gn, bn_, mu, rstd, rows, D, batch_stats](TensorNode& self) {
    const bool gx = xn->requires_grad, gg = gn->requires_grad, gb = bn_->requires_grad;
    if (gx) xn->ensure_grad();
    if (gg) gn->ensure_grad();
    if (gb) bn_->ensure_grad();
    for (int c = 0; c < D; ++c) {
      double sum_g = 0, sum_gx = 0;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double g = self.grad[r * D + c];
        const double xh = (xn->data[r * D + c] - mu[c]) * rstd[c];
        sum_g += g;
        sum_gx += g * xh;
      }
      if (gg) gn->grad[c] += sum_gx;
      if (gb) bn_->grad[c] += sum_g;
      if (gx) {
        const double gamma_c = gn->data[c];
        if (batch_stats) {
          const double inv_n = 1.0 / static_cast<double>(rows);
          for (std::int64_t r = 0; r < rows; ++r) {
            const double g = self.grad[r * D + c];
            const double xh = (xn->data[r * D + c] - mu[c]) * rstd[c];
            xn->grad[r * D + c] +=
                gamma_c * rstd[c] * (g - inv_n * sum_g - xh * inv_n * sum_gx);
          }
        } else {
          for (std::int64_t r = 0; r < rows; ++r) {
            xn->grad[r * D + c] += gamma_c * rstd[c] * self.grad[r * D + c];
          }
        }
      }
    }
  };
  return make_op_result(x.shape(), std::move(out), {x, gamma, beta}, std::move(backward),
                        "batch_norm_bt");
}

}  // namespace viopose
