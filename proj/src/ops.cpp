#include "viopose/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace viopose {
namespace {

using i64 = std::int64_t;

std::vector<i64> element_strides(const Shape& s) {
  std::vector<i64> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}

int norm_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument(std::string(op) + ": axis out of range");
  }
  return axis;
}

// (outer, len, inner) factorization around one axis.
struct AxisView {
  i64 outer, len, inner;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

struct BcastPlan {
  Shape out;
  std::vector<i64> sa, sb;  // per-out-axis strides into a and b (0 = broadcast)
};

BcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(r);
  for (int i = 0; i < r; ++i) {
    const int da = i < r - ra ? 1 : a[i - (r - ra)];
    const int db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(std::string(op) + ": shapes not broadcastable: " +
                                  shape_str(a) + " vs " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  BcastPlan plan;
  plan.out = out;
  const auto ea = element_strides(a), eb = element_strides(b);
  plan.sa.assign(r, 0);
  plan.sb.assign(r, 0);
  for (int i = 0; i < r; ++i) {
    if (i >= r - ra && a[i - (r - ra)] != 1) plan.sa[i] = ea[i - (r - ra)];
    if (i >= r - rb && b[i - (r - rb)] != 1) plan.sb[i] = eb[i - (r - rb)];
  }
  return plan;
}

// Walks every element of plan.out, yielding flat offsets into a and b.
template <typename F>
void for_each_bcast(const BcastPlan& plan, F&& f) {
  const int r = static_cast<int>(plan.out.size());
  const i64 n = shape_numel(plan.out);
  std::vector<int> idx(r, 0);
  i64 oa = 0, ob = 0;
  for (i64 i = 0; i < n; ++i) {
    f(i, oa, ob);
    for (int d = r - 1; d >= 0; --d) {
      if (++idx[d] < plan.out[d]) {
        oa += plan.sa[d];
        ob += plan.sb[d];
        break;
      }
      idx[d] = 0;
      oa -= plan.sa[d] * (plan.out[d] - 1);
      ob -= plan.sb[d] * (plan.out[d] - 1);
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div, Max };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const auto plan = broadcast_plan(a.shape(), b.shape(), name);
  std::vector<double> out(static_cast<std::size_t>(shape_numel(plan.out)));
  const auto ad = a.data(), bd = b.data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = ad[i], y = bd[i];
      switch (op) {
        case BinOp::Add: out[i] = x + y; break;
        case BinOp::Sub: out[i] = x - y; break;
        case BinOp::Mul: out[i] = x * y; break;
        case BinOp::Div: out[i] = x / y; break;
        case BinOp::Max: out[i] = x >= y ? x : y; break;
      }
    }
  } else {
    for_each_bcast(plan, [&](i64 i, i64 oa, i64 ob) {
      const double x = ad[oa], y = bd[ob];
      switch (op) {
        case BinOp::Add: out[i] = x + y; break;
        case BinOp::Sub: out[i] = x - y; break;
        case BinOp::Mul: out[i] = x * y; break;
        case BinOp::Div: out[i] = x / y; break;
        case BinOp::Max: out[i] = x >= y ? x : y; break;
      }
    });
  }

  auto an = a.node(), bn = b.node();
  auto backward = [an, bn, plan, op](TensorNode& self) {
    const bool ga = an->requires_grad, gb = bn->requires_grad;
    if (ga) an->ensure_grad();
    if (gb) bn->ensure_grad();
    for_each_bcast(plan, [&](i64 i, i64 oa, i64 ob) {
      const double g = self.grad[static_cast<std::size_t>(i)];
      const double x = an->data[static_cast<std::size_t>(oa)];
      const double y = bn->data[static_cast<std::size_t>(ob)];
      double da = 0, db = 0;
      switch (op) {
        case BinOp::Add: da = g; db = g; break;
        case BinOp::Sub: da = g; db = -g; break;
        case BinOp::Mul: da = g * y; db = g * x; break;
        case BinOp::Div: da = g / y; db = -g * x / (y * y); break;
        case BinOp::Max:
          if (x >= y) da = g; else db = g;
          break;
      }
      if (ga) an->grad[static_cast<std::size_t>(oa)] += da;
      if (gb) bn->grad[static_cast<std::size_t>(ob)] += db;
    });
  };
  return make_op_result(plan.out, std::move(out), {a, b}, std::move(backward), name);
}

Tensor unary_op(const Tensor& x, const char* name, double (*fwd)(double), double (*dfdx)(double)) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = fwd(v);
  auto xn = x.node();
  auto backward = [xn, dfdx](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += self.grad[i] * dfdx(xn->data[i]);
    }
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward), name);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul, "mul"); }
Tensor divide(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Div, "div"); }
Tensor maximum(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Max, "maximum"); }

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= c;
  auto xn = x.node();
  auto backward = [xn, c](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * c;
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward), "scale");
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v += c;
  auto xn = x.node();
  auto backward = [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward), "add_scalar");
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) {
        const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return phi + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor sqrt_op(const Tensor& x) {
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double v) { return v > 0 ? 0.5 / std::sqrt(v) : 0.0; });
}

Tensor softmax(const Tensor& x, int axis) {
  const int ax = norm_axis(axis, x.rank(), "softmax");
  const AxisView v = axis_view(x.shape(), ax);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (i64 o = 0; o < v.outer; ++o) {
    for (i64 in = 0; in < v.inner; ++in) {
      const i64 base = o * v.len * v.inner + in;
      double mx = out[base];
      for (i64 t = 1; t < v.len; ++t) mx = std::max(mx, out[base + t * v.inner]);
      double sum = 0;
      for (i64 t = 0; t < v.len; ++t) {
        double& e = out[base + t * v.inner];
        e = std::exp(e - mx);
        sum += e;
      }
      for (i64 t = 0; t < v.len; ++t) out[base + t * v.inner] /= sum;
    }
  }
  auto xn = x.node();
  std::vector<double> y = out;
  auto backward = [xn, v, y](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (i64 o = 0; o < v.outer; ++o) {
      for (i64 in = 0; in < v.inner; ++in) {
        const i64 base = o * v.len * v.inner + in;
        double dot = 0;
        for (i64 t = 0; t < v.len; ++t) {
          const i64 k = base + t * v.inner;
          dot += self.grad[k] * y[k];
        }
        for (i64 t = 0; t < v.len; ++t) {
          const i64 k = base + t * v.inner;
          xn->grad[k] += y[k] * (self.grad[k] - dot);
        }
      }
    }
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward), "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int D = x.dim(-1);
  if (gamma.numel() != D || beta.numel() != D) {
    throw std::invalid_argument("layer_norm: gamma/beta length must equal last extent " +
                                std::to_string(D));
  }
  const i64 rows = x.numel() / D;
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  std::vector<double> mean(rows), rstd(rows);
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (i64 r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * D;
    double mu = 0;
    for (int i = 0; i < D; ++i) mu += row[i];
    mu /= D;
    double var = 0;
    for (int i = 0; i < D; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= D;
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int i = 0; i < D; ++i) out[r * D + i] = (row[i] - mu) * rs * gd[i] + bd[i];
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  auto backward = [xn, gn, bn, D, rows, mean, rstd](TensorNode& self) {
    const bool gx = xn->requires_grad, gg = gn->requires_grad, gb = bn->requires_grad;
    if (gx) xn->ensure_grad();
    if (gg) gn->ensure_grad();
    if (gb) bn->ensure_grad();
    for (i64 r = 0; r < rows; ++r) {
      const double* row = xn->data.data() + r * D;
      const double* g = self.grad.data() + r * D;
      const double mu = mean[r], rs = rstd[r];
      double m1 = 0, m2 = 0;
      for (int i = 0; i < D; ++i) {
        const double xh = (row[i] - mu) * rs;
        const double gg_i = g[i] * gn->data[i];
        m1 += gg_i;
        m2 += gg_i * xh;
      }
      m1 /= D;
      m2 /= D;
      for (int i = 0; i < D; ++i) {
        const double xh = (row[i] - mu) * rs;
        if (gx) xn->grad[r * D + i] += rs * (g[i] * gn->data[i] - m1 - xh * m2);
        if (gg) gn->grad[i] += g[i] * xh;
        if (gb) bn->grad[i] += g[i];
      }
    }
  };
  return make_op_result(x.shape(), std::move(out), {x, gamma, beta}, std::move(backward),
                        "layer_norm");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw std::invalid_argument("matmul: operands must have rank >= 2: " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(-2), k = a.dim(-1);
  const int k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner extents differ: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const auto plan = broadcast_plan(lead_a, lead_b, "matmul");
  const i64 L = shape_numel(plan.out);

  std::vector<i64> offs_a(L), offs_b(L);
  {
    i64 idx = 0;
    for_each_bcast(plan, [&](i64 i, i64 oa, i64 ob) {
      offs_a[i] = oa * (static_cast<i64>(m) * k);
      offs_b[i] = ob * (static_cast<i64>(k) * n);
      (void)idx;
    });
  }

  Shape out_shape = plan.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<std::size_t>(L) * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();

#pragma omp parallel for schedule(static)
  for (i64 lm = 0; lm < L * m; ++lm) {
    const i64 l = lm / m;
    const int i = static_cast<int>(lm % m);
    const double* A = ad + offs_a[l] + static_cast<i64>(i) * k;
    const double* B = bd + offs_b[l];
    double* C = out.data() + (l * m + i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = A[p];
      const double* Bp = B + static_cast<i64>(p) * n;
      for (int j = 0; j < n; ++j) C[j] += av * Bp[j];
    }
  }

  auto an = a.node(), bn = b.node();
  auto backward = [an, bn, offs_a, offs_b, L, m, n, k](TensorNode& self) {
    const bool ga = an->requires_grad, gb = bn->requires_grad;
    if (ga) an->ensure_grad();
    if (gb) bn->ensure_grad();
    for (i64 l = 0; l < L; ++l) {
      const double* dC = self.grad.data() + l * static_cast<i64>(m) * n;
      const double* A = an->data.data() + offs_a[l];
      const double* B = bn->data.data() + offs_b[l];
      if (ga) {
        double* dA = an->grad.data() + offs_a[l];
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const double* Bp = B + static_cast<i64>(p) * n;
            const double* dCi = dC + static_cast<i64>(i) * n;
            double acc = 0;
            for (int j = 0; j < n; ++j) acc += dCi[j] * Bp[j];
            dA[static_cast<i64>(i) * k + p] += acc;
          }
        }
      }
      if (gb) {
        double* dB = bn->grad.data() + offs_b[l];
#pragma omp parallel for schedule(static)
        for (int p = 0; p < k; ++p) {
          for (int i = 0; i < m; ++i) {
            const double av = A[static_cast<i64>(i) * k + p];
            const double* dCi = dC + static_cast<i64>(i) * n;
            double* dBp = dB + static_cast<i64>(p) * n;
            for (int j = 0; j < n; ++j) dBp[j] += av * dCi[j];
          }
        }
      }
    }
  };
  return make_op_result(out_shape, std::move(out), {a, b}, std::move(backward), "matmul");
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, int stride) {
  if (x.rank() != 3 || kernels.rank() != 3) {
    throw std::invalid_argument("conv1d: expected x (b,c_in,t) and kernels (c_out,c_in,k): " +
                                shape_str(x.shape()) + " vs " + shape_str(kernels.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  const int B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const int Cout = kernels.dim(0), Cin2 = kernels.dim(1), K = kernels.dim(2);
  if (Cin != Cin2) {
    throw std::invalid_argument("conv1d: channel mismatch: " + shape_str(x.shape()) + " vs " +
                                shape_str(kernels.shape()));
  }
  if (K > T) {
    throw std::invalid_argument("conv1d: kernel wider than input: " + shape_str(kernels.shape()) +
                                " vs " + shape_str(x.shape()));
  }
  const int Tout = (T + stride - 1) / stride;
  const int total_pad = std::max(0, (Tout - 1) * stride + K - T);
  const int left = total_pad / 2;

  std::vector<double> out(static_cast<std::size_t>(B) * Cout * Tout, 0.0);
  const double* xd = x.data().data();
  const double* kd = kernels.data().data();
#pragma omp parallel for schedule(static)
  for (i64 bc = 0; bc < static_cast<i64>(B) * Cout; ++bc) {
    const int b = static_cast<int>(bc / Cout);
    const int co = static_cast<int>(bc % Cout);
    double* o = out.data() + bc * Tout;
    for (int j = 0; j < Tout; ++j) {
      double acc = 0;
      for (int ci = 0; ci < Cin; ++ci) {
        const double* xr = xd + (static_cast<i64>(b) * Cin + ci) * T;
        const double* kr = kd + (static_cast<i64>(co) * Cin + ci) * K;
        for (int u = 0; u < K; ++u) {
          const int src = j * stride + u - left;
          if (src >= 0 && src < T) acc += xr[src] * kr[u];
        }
      }
      o[j] = acc;
    }
  }

  auto xn = x.node(), kn = kernels.node();
  auto backward = [xn, kn, B, Cin, Cout, T, Tout, K, stride, left](TensorNode& self) {
    const bool gx = xn->requires_grad, gk = kn->requires_grad;
    if (gx) xn->ensure_grad();
    if (gk) kn->ensure_grad();
    if (gx) {
#pragma omp parallel for schedule(static)
      for (i64 bc = 0; bc < static_cast<i64>(B) * Cin; ++bc) {
        const int b = static_cast<int>(bc / Cin);
        const int ci = static_cast<int>(bc % Cin);
        double* dx = xn->grad.data() + bc * T;
        for (int i = 0; i < T; ++i) {
          double acc = 0;
          for (int co = 0; co < Cout; ++co) {
            const double* dy = self.grad.data() + (static_cast<i64>(b) * Cout + co) * Tout;
            const double* kr = kn->data.data() + (static_cast<i64>(co) * Cin + ci) * K;
            for (int u = 0; u < K; ++u) {
              const int num = i + left - u;
              if (num >= 0 && num % stride == 0) {
                const int j = num / stride;
                if (j < Tout) acc += dy[j] * kr[u];
              }
            }
          }
          dx[i] += acc;
        }
      }
    }
    if (gk) {
#pragma omp parallel for schedule(static)
      for (i64 cc = 0; cc < static_cast<i64>(Cout) * Cin; ++cc) {
        const int co = static_cast<int>(cc / Cin);
        const int ci = static_cast<int>(cc % Cin);
        double* dk = kn->grad.data() + cc * K;
        for (int u = 0; u < K; ++u) {
          double acc = 0;
          for (int b = 0; b < B; ++b) {
            const double* dy = self.grad.data() + (static_cast<i64>(b) * Cout + co) * Tout;
            const double* xr = xn->data.data() + (static_cast<i64>(b) * Cin + ci) * T;
            for (int j = 0; j < Tout; ++j) {
              const int src = j * stride + u - left;
              if (src >= 0 && src < T) acc += dy[j] * xr[src];
            }
          }
          dk[u] += acc;
        }
      }
    }
  };
  return make_op_result({B, Cout, Tout}, std::move(out), {x, kernels}, std::move(backward),
                        "conv1d");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int ax = norm_axis(axis, parts[0].rank(), "concat");
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank()) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < p.rank(); ++d) {
      if (d != ax && p.dim(d) != out_shape[d]) {
        throw std::invalid_argument("concat: shape mismatch off-axis: " + shape_str(p.shape()) +
                                    " vs " + shape_str(out_shape));
      }
    }
    total += p.dim(ax);
  }
  out_shape[ax] = total;
  const AxisView ov = axis_view(out_shape, ax);
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<int> lens;
  i64 off = 0;
  for (const Tensor& p : parts) {
    const int len = p.dim(ax);
    lens.push_back(len);
    const auto pd = p.data();
    for (i64 o = 0; o < ov.outer; ++o) {
      std::copy(pd.begin() + o * len * ov.inner, pd.begin() + (o + 1) * len * ov.inner,
                out.begin() + (o * ov.len + off) * ov.inner);
    }
    off += len;
  }
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  auto backward = [nodes, lens, ov](TensorNode& self) {
    i64 off2 = 0;
    for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
      const int len = lens[pi];
      auto& n = nodes[pi];
      if (n->requires_grad) {
        n->ensure_grad();
        for (i64 o = 0; o < ov.outer; ++o) {
          const double* g = self.grad.data() + (o * ov.len + off2) * ov.inner;
          double* dst = n->grad.data() + o * len * ov.inner;
          for (i64 t = 0; t < static_cast<i64>(len) * ov.inner; ++t) dst[t] += g[t];
        }
      }
      off2 += len;
    }
  };
  return make_op_result(out_shape, std::move(out), parts, std::move(backward), "concat");
}

Tensor slice_axis(const Tensor& x, int axis, int start, int len) {
  const int ax = norm_axis(axis, x.rank(), "slice_axis");
  if (start < 0 || len <= 0 || start + len > x.dim(ax)) {
    throw std::invalid_argument("slice_axis: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_str(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = len;
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const auto xd = x.data();
  for (i64 o = 0; o < v.outer; ++o) {
    std::copy(xd.begin() + (o * v.len + start) * v.inner,
              xd.begin() + (o * v.len + start + len) * v.inner, out.begin() + o * len * v.inner);
  }
  auto xn = x.node();
  auto backward = [xn, v, start, len](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (i64 o = 0; o < v.outer; ++o) {
      const double* g = self.grad.data() + o * len * v.inner;
      double* dst = xn->grad.data() + (o * v.len + start) * v.inner;
      for (i64 t = 0; t < static_cast<i64>(len) * v.inner; ++t) dst[t] += g[t];
    }
  };
  return make_op_result(out_shape, std::move(out), {x}, std::move(backward), "slice_axis");
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw std::invalid_argument("reshape: element count mismatch: " + shape_str(x.shape()) +
                                " vs " + shape_str(new_shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  auto backward = [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  };
  return make_op_result(std::move(new_shape), std::move(out), {x}, std::move(backward), "reshape");
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  const int ra = norm_axis(axis_a, x.rank(), "transpose");
  const int rb = norm_axis(axis_b, x.rank(), "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[ra], out_shape[rb]);
  const auto in_str = element_strides(x.shape());
  auto perm_str = in_str;
  std::swap(perm_str[ra], perm_str[rb]);

  const i64 n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto xd = x.data();
  const int r = x.rank();
  std::vector<int> idx(r, 0);
  i64 src = 0;
  for (i64 i = 0; i < n; ++i) {
    out[i] = xd[src];
    for (int d = r - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) {
        src += perm_str[d];
        break;
      }
      idx[d] = 0;
      src -= perm_str[d] * (out_shape[d] - 1);
    }
  }
  auto xn = x.node();
  auto backward = [xn, out_shape, perm_str, r, n](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    std::vector<int> id2(r, 0);
    i64 src2 = 0;
    for (i64 i = 0; i < n; ++i) {
      xn->grad[src2] += self.grad[i];
      for (int d = r - 1; d >= 0; --d) {
        if (++id2[d] < out_shape[d]) {
          src2 += perm_str[d];
          break;
        }
        id2[d] = 0;
        src2 -= perm_str[d] * (out_shape[d] - 1);
      }
    }
  };
  return make_op_result(out_shape, std::move(out), {x}, std::move(backward), "transpose");
}

Tensor sum_all(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  auto xn = x.node();
  auto backward = [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0];
    for (double& d : xn->grad) d += g;
  };
  return make_op_result({1}, {s}, {x}, std::move(backward), "sum_all");
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0;
  for (double v : x.data()) s += v;
  s *= inv;
  auto xn = x.node();
  auto backward = [xn, inv](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0] * inv;
    for (double& d : xn->grad) d += g;
  };
  return make_op_result({1}, {s}, {x}, std::move(backward), "mean_all");
}

Tensor sum_last(const Tensor& x) {
  const int D = x.dim(-1);
  const i64 rows = x.numel() / D;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  const auto xd = x.data();
  for (i64 r = 0; r < rows; ++r) {
    double s = 0;
    for (int i = 0; i < D; ++i) s += xd[r * D + i];
    out[r] = s;
  }
  auto xn = x.node();
  auto backward = [xn, D, rows](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (i64 r = 0; r < rows; ++r) {
      const double g = self.grad[r];
      for (int i = 0; i < D; ++i) xn->grad[r * D + i] += g;
    }
  };
  return make_op_result(out_shape, std::move(out), {x}, std::move(backward), "sum_last");
}

Tensor cumsum_time(const Tensor& x, int axis) {
  const int ax = norm_axis(axis, x.rank(), "cumsum_time");
  const AxisView v = axis_view(x.shape(), ax);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (i64 o = 0; o < v.outer; ++o) {
    for (i64 t = 1; t < v.len; ++t) {
      double* cur = out.data() + (o * v.len + t) * v.inner;
      const double* prev = out.data() + (o * v.len + t - 1) * v.inner;
      for (i64 i = 0; i < v.inner; ++i) cur[i] += prev[i];
    }
  }
  auto xn = x.node();
  auto backward = [xn, v](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    std::vector<double> suffix(static_cast<std::size_t>(v.inner));
    for (i64 o = 0; o < v.outer; ++o) {
      std::fill(suffix.begin(), suffix.end(), 0.0);
      for (i64 t = v.len - 1; t >= 0; --t) {
        const double* g = self.grad.data() + (o * v.len + t) * v.inner;
        double* dst = xn->grad.data() + (o * v.len + t) * v.inner;
        for (i64 i = 0; i < v.inner; ++i) {
          suffix[i] += g[i];
          dst[i] += suffix[i];
        }
      }
    }
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward), "cumsum_time");
}

Tensor diff_time(const Tensor& x, int axis, double dt) {
  const int ax = norm_axis(axis, x.rank(), "diff_time");
  if (dt <= 0) throw std::invalid_argument("diff_time: dt must be positive");
  const AxisView v = axis_view(x.shape(), ax);
  if (v.len < 3) {
    throw std::invalid_argument("diff_time: need at least 3 frames along axis, got " +
                                std::to_string(v.len));
  }
  const double h = 1.0 / (2.0 * dt);
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const auto xd = x.data();
  auto at = [&](i64 o, i64 t, i64 i) { return xd[(o * v.len + t) * v.inner + i]; };
  for (i64 o = 0; o < v.outer; ++o) {
    for (i64 i = 0; i < v.inner; ++i) {
      out[(o * v.len + 0) * v.inner + i] =
          (-3.0 * at(o, 0, i) + 4.0 * at(o, 1, i) - at(o, 2, i)) * h;
      for (i64 t = 1; t < v.len - 1; ++t) {
        out[(o * v.len + t) * v.inner + i] = (at(o, t + 1, i) - at(o, t - 1, i)) * h;
      }
      out[(o * v.len + v.len - 1) * v.inner + i] =
          (3.0 * at(o, v.len - 1, i) - 4.0 * at(o, v.len - 2, i) + at(o, v.len - 3, i)) * h;
    }
  }
  auto xn = x.node();
  auto backward = [xn, v, h](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    auto g = [&](i64 o, i64 t, i64 i) { return self.grad[(o * v.len + t) * v.inner + i]; };
    auto acc = [&](i64 o, i64 t, i64 i, double val) {
      xn->grad[(o * v.len + t) * v.inner + i] += val;
    };
    for (i64 o = 0; o < v.outer; ++o) {
      for (i64 i = 0; i < v.inner; ++i) {
        acc(o, 0, i, -3.0 * h * g(o, 0, i));
        acc(o, 1, i, 4.0 * h * g(o, 0, i));
        acc(o, 2, i, -1.0 * h * g(o, 0, i));
        for (i64 t = 1; t < v.len - 1; ++t) {
          acc(o, t + 1, i, h * g(o, t, i));
          acc(o, t - 1, i, -h * g(o, t, i));
        }
        acc(o, v.len - 1, i, 3.0 * h * g(o, v.len - 1, i));
        acc(o, v.len - 2, i, -4.0 * h * g(o, v.len - 1, i));
        acc(o, v.len - 3, i, 1.0 * h * g(o, v.len - 1, i));
      }
    }
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward), "diff_time");
}

Tensor resample_linear_time(const Tensor& x, int axis, int new_len) {
  const int ax = norm_axis(axis, x.rank(), "resample_linear_time");
  if (new_len < 1) throw std::invalid_argument("resample_linear_time: new_len must be >= 1");
  const AxisView v = axis_view(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = new_len;
  std::vector<i64> i0(new_len);
  std::vector<double> w(new_len);
  for (int j = 0; j < new_len; ++j) {
    const double src = new_len == 1 ? 0.0
                                    : static_cast<double>(j) * static_cast<double>(v.len - 1) /
                                          static_cast<double>(new_len - 1);
    i64 lo = static_cast<i64>(std::floor(src));
    if (lo > v.len - 2) lo = v.len - 2;
    if (lo < 0) lo = 0;
    i0[j] = lo;
    w[j] = v.len == 1 ? 0.0 : src - static_cast<double>(lo);
  }
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const auto xd = x.data();
  for (i64 o = 0; o < v.outer; ++o) {
    for (int j = 0; j < new_len; ++j) {
      const double* lo = xd.data() + (o * v.len + i0[j]) * v.inner;
      const double* hi = xd.data() + (o * v.len + std::min<i64>(i0[j] + 1, v.len - 1)) * v.inner;
      double* dst = out.data() + (o * new_len + j) * v.inner;
      for (i64 i = 0; i < v.inner; ++i) dst[i] = (1.0 - w[j]) * lo[i] + w[j] * hi[i];
    }
  }
  auto xn = x.node();
  auto backward = [xn, v, new_len, i0, w](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (i64 o = 0; o < v.outer; ++o) {
      for (int j = 0; j < new_len; ++j) {
        const double* g = self.grad.data() + (o * new_len + j) * v.inner;
        double* lo = xn->grad.data() + (o * v.len + i0[j]) * v.inner;
        double* hi = xn->grad.data() + (o * v.len + std::min<i64>(i0[j] + 1, v.len - 1)) * v.inner;
        for (i64 i = 0; i < v.inner; ++i) {
          lo[i] += (1.0 - w[j]) * g[i];
          hi[i] += w[j] * g[i];
        }
      }
    }
  };
  return make_op_result(out_shape, std::move(out), {x}, std::move(backward),
                        "resample_linear_time");
}

Tensor max_cosine_loss(const Tensor& pred, const Tensor& tgt) {
  if (pred.shape() != tgt.shape()) {
    throw std::invalid_argument("max_cosine_loss: shape mismatch: " + shape_str(pred.shape()) +
                                " vs " + shape_str(tgt.shape()));
  }
  const int V = pred.dim(-1);
  const i64 rows = pred.numel() / V;
  const auto pd = pred.data(), td = tgt.data();
  double total = 0;
  for (i64 r = 0; r < rows; ++r) {
    const double* p = pd.data() + r * V;
    const double* t = td.data() + r * V;
    double na = 0, nb = 0, dot = 0;
    for (int i = 0; i < V; ++i) {
      na += p[i] * p[i];
      nb += t[i] * t[i];
      dot += p[i] * t[i];
    }
    double s;
    if (na == 0 && nb == 0) {
      s = 1.0;
    } else if (na == 0 || nb == 0) {
      s = 0.0;
    } else {
      s = dot / std::max(na, nb);
    }
    total += 1.0 - s;
  }
  total /= static_cast<double>(rows);

  auto pn = pred.node(), tn = tgt.node();
  auto backward = [pn, tn, rows, V](TensorNode& self) {
    const bool gp = pn->requires_grad, gt = tn->requires_grad;
    if (gp) pn->ensure_grad();
    if (gt) tn->ensure_grad();
    const double gout = -self.grad[0] / static_cast<double>(rows);  // d(1-s)/ds = -1
    for (i64 r = 0; r < rows; ++r) {
      const double* p = pn->data.data() + r * V;
      const double* t = tn->data.data() + r * V;
      double na = 0, nb = 0, dot = 0;
      for (int i = 0; i < V; ++i) {
        na += p[i] * p[i];
        nb += t[i] * t[i];
        dot += p[i] * t[i];
      }
      if (na == 0 || nb == 0) continue;  // piecewise-constant regions
      const double m = std::max(na, nb);
      const double inv = 1.0 / m;
      for (int i = 0; i < V; ++i) {
        double dsp = t[i] * inv;
        double dst = p[i] * inv;
        if (na >= nb) {
          dsp -= 2.0 * dot * p[i] * inv * inv;
        } else {
          dst -= 2.0 * dot * t[i] * inv * inv;
        }
        if (gp) pn->grad[r * V + i] += gout * dsp;
        if (gt) tn->grad[r * V + i] += gout * dst;
      }
    }
  };
  return make_op_result({1}, {total}, {pred, tgt}, std::move(backward), "max_cosine_loss");
}

}  // namespace viopose
