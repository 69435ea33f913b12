#include "fino/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fino {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<detail::TensorImpl> new_impl(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw PreconditionError("tensor rank must be at least 1");
  for (auto e : shape) {
    if (e == 0) throw PreconditionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw PreconditionError("value count " + std::to_string(values.size()) + " does not match shape " +
                            shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  detail::require_finite("from", values);
  return Tensor(new_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

detail::TensorImpl& Tensor::checked() const {
  if (!impl_) throw PreconditionError("use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw PreconditionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<const double> Tensor::values() const { return checked().data; }

std::span<double> Tensor::mutable_values() { return checked().data; }

std::vector<double> Tensor::grad() const {
  const auto& impl = checked();
  if (impl.grad.size() != impl.data.size()) return std::vector<double>(impl.data.size(), 0.0);
  return impl.grad;
}

bool Tensor::has_grad() const { return checked().grad.size() == checked().data.size(); }

void Tensor::zero_grad() {
  auto& impl = checked();
  std::fill(impl.grad.begin(), impl.grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  auto& impl = checked();
  if (!impl.is_leaf()) throw PreconditionError("requires_grad can only be set on leaf tensors");
  impl.requires_grad = flag;
}

double Tensor::item() const {
  const auto& impl = checked();
  if (impl.data.size() != 1) throw PreconditionError("item() on tensor of shape " + shape_str(impl.shape));
  return impl.data[0];
}

double Tensor::at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
  const auto& s = shape();
  if (s.size() != 4) throw PreconditionError("at(b,c,h,w) needs a rank-4 tensor, got " + shape_str(s));
  return checked().data[((b * s[1] + c) * s[2] + h) * s[3] + w];
}

Tensor Tensor::detach() const {
  const auto& impl = checked();
  return Tensor(new_impl(impl.shape, impl.data, false));
}

Tensor Tensor::clone() const {
  const auto& impl = checked();
  return Tensor(new_impl(impl.shape, impl.data, impl.requires_grad));
}

const char* Tensor::op_name() const { return checked().op; }

void Tensor::backward() const {
  auto& root = checked();
  if (root.data.size() != 1) {
    throw PreconditionError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS; reversed it is a topological order from the root.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());

  for (auto* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0);
  }
  root.grad_buffer()[0] += 1.0;
  for (auto* node : order) {
    if (!node->is_leaf()) node->backward_fn(*node);
  }
}

namespace detail {

void require_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(TensorImpl&)> backward) {
  require_finite(op, data);
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
  auto impl = new_impl(std::move(shape), std::move(data), needs_grad);
  impl->op = op;
  if (needs_grad) {
    impl->parents.reserve(parents.size());
    for (auto& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

}  // namespace fino
