#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fino {

/// Raised when an operation is called with arguments that violate its contract
/// (shape mismatch, bad window, non-binary mask, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward pass produces NaN or Inf, or a numeric check fails.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Propagates this node's grad into its parents' grad buffers.
  std::function<void(TensorImpl&)> backward_fn;
  const char* op = "leaf";

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense 64-bit tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage. Operations in
/// ops.hpp record the graph only when at least one input requires grad.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful for leaves; editing an interior
  /// node does not re-run the graph.
  std::span<double> mutable_values();

  /// Gradient buffer; all zeros when backward has not reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  double item() const;
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const;

  /// Copy of the values, cut from the graph.
  Tensor detach() const;
  /// Deep copy including requires_grad flag, but no graph history.
  Tensor clone() const;

  /// Reverse sweep from a scalar. Leaf grads accumulate across calls;
  /// interior grads are reset at the start of every call.
  void backward() const;

  const char* op_name() const;

  // Used by the op implementations.
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  detail::TensorImpl& checked() const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

/// Builds an op output. `backward` receives (output node, parents) and is only
/// stored when some parent requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, std::function<void(TensorImpl&)> backward);

void require_finite(const char* op, std::span<const double> values);

}  // namespace detail

}  // namespace fino
