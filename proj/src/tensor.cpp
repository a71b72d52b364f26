#include "viopose/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace viopose {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape& s) {
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(s));
  }
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool enabled) { g_grad_enabled = enabled; }

void TensorNode::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->data.begin(), t.node()->data.end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::runtime_error("tensor: undefined handle");
  return node_->shape;
}

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw std::runtime_error("tensor: undefined handle");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw std::runtime_error("tensor: undefined handle");
  return node_->data;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::grad() const {
  if (!node_) throw std::runtime_error("tensor: undefined handle");
  if (node_->grad.size() != node_->data.size()) {
    const_cast<TensorNode*>(node_.get())->ensure_grad();
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) return;
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw std::invalid_argument("tensor: index rank mismatch");
  std::int64_t flat = 0;
  std::size_t k = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[k]) throw std::invalid_argument("tensor: index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

void Tensor::backward() const {
  if (!node_) throw std::runtime_error("backward: undefined tensor");
  if (numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(shape()));
  }
  if (node_->consumed) {
    throw std::runtime_error("backward: tape already consumed; run a new forward pass");
  }

  // Topological order over the recorded graph (parents before children).
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      TensorNode* p = n->parents[next].get();
      ++next;
      if (p && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
      n->backward_fn = nullptr;  // one sweep per recorded forward
    }
    n->consumed = true;
  }
}

Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn, const char* op_name) {
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) { needs_grad = true; break; }
    }
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op_name = op_name;
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace viopose
