#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "viopose/ops.hpp"
#include "viopose/tensor.hpp"

namespace viopose {

// Deterministic RNG with library-independent distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  double uniform();  // [0,1)
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  // Stable sub-stream derivation, e.g. per-sample seeds.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t s_[4];
};

// Named parameter table. Insertion order is the checkpoint order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };

  Tensor add_param(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::int64_t count_trainable() const;
  std::int64_t count_all() const;
  void zero_grads();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)

  static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

struct Conv1dLayer {
  Tensor kernels;  // (c_out, c_in, k)
  Tensor bias;     // (c_out, 1)
  int stride = 1;

  static Conv1dLayer create(ParamStore& ps, const std::string& name, int c_in, int c_out, int k,
                            int stride, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 8;

  static MultiHeadAttention create(ParamStore& ps, const std::string& name, int dim, int heads,
                                   Rng& rng);
  // q_in == kv_in gives self-attention.
  Tensor forward(const Tensor& q_in, const Tensor& kv_in) const;
};

// Pre-norm block: x + MHA(LN(x)); then x + FFN(LN(x)).
struct TransformerBlock {
  MultiHeadAttention mha;
  Linear ffn_in, ffn_out;
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  double ln_eps = 1e-5;

  static TransformerBlock create(ParamStore& ps, const std::string& name, int dim, int heads,
                                 int ffn_dim, Rng& rng);
  Tensor forward(const Tensor& x) const;
  // Queries from x, keys/values from kv.
  Tensor forward_cross(const Tensor& x, const Tensor& kv) const;
};

enum class BatchNormMode {
  Train,   // batch statistics, update running stats
  Frozen,  // batch statistics, no side effects (gradient checking)
  Eval,    // running statistics
};

// Normalizes each channel (last axis) over the joint batch x time axes.
struct BatchNormBT {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  Tensor steps;  // scalar buffer; 0 until the first Train forward
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormBT create(ParamStore& ps, const std::string& name, int channels);
  Tensor forward(const Tensor& x, BatchNormMode mode) const;
};

}  // namespace viopose
