#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace viopose {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

struct TensorNode;

// Dense row-major float64 tensor. Copying a Tensor copies the handle, not
// the storage; forward ops allocate fresh nodes, so values never alias.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  // Direct mutation is for leaves only (initialization, optimizer updates);
  // mutating an interior node would desynchronize the recorded graph.
  std::span<double> mutable_data();

  bool requires_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<int> idx) const;

  // Reverse-mode sweep from a scalar. The recorded graph is consumed; a
  // second backward() without a fresh forward throws.
  void backward() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  std::vector<std::shared_ptr<TensorNode>> parents;
  // Receives this node's grad, accumulates into parents' grads.
  std::function<void(TensorNode&)> backward_fn;
  const char* op_name = "";
  bool consumed = false;

  void ensure_grad();
};

// Per-thread autodiff switch. Ops record a backward function only when
// grads are enabled and some input requires them.
bool grad_enabled();
void set_grad_enabled(bool enabled);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }

 private:
  bool prev_;
};

// Internal helper for op implementations.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn,
                      const char* op_name);

}  // namespace viopose
