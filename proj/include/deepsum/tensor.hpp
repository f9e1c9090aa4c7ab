#pragma once

// Dense row-major float64 tensor with a reverse-mode autodiff tape.
//
// A Tensor is a cheap handle onto a shared node. Values are immutable once
// the tensor is created; the only exception is leaf parameters, which the
// optimizer and checkpoint loader overwrite in place through
// mutable_values(). Operations that consume a tensor requiring gradients
// record a backward closure on the result, so the graph is built eagerly
// during the forward pass and torn down by backward().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepsum {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros if backward never reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  /// Reverse sweep from this scalar. A graph can be swept once; sweeping it
  /// again without rebuilding the forward pass throws std::logic_error.
  void backward();

  /// In-place access for leaves only (optimizer updates, checkpoint loads).
  std::span<double> mutable_values();

  /// Same values, no graph history, no gradient tracking.
  Tensor detach() const;
  /// Deep copy of values into a fresh trainable leaf.
  Tensor clone_parameter() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an op result. When gradient recording is off or no parent needs
  /// gradients, the parents and closure are dropped.
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace deepsum
