#include "deepsum/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace deepsum {
namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  node_->value.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf()) throw std::logic_error("mutable_values() on a non-leaf tensor");
  return node_->value;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

Tensor Tensor::clone_parameter() const { return parameter(node_->shape, node_->value); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      if (p.defined() && p.requires_grad()) needs = true;
    }
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (Tensor& p : parents) n->parents.push_back(p.node_);
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

void Tensor::backward() {
  if (size() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_str(shape()));
  if (node_->consumed) {
    throw std::logic_error("backward() called twice on the same graph; rebuild the forward pass first");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  // Owning pointers: sweeping a node releases its parent links.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack{{node_, 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      std::shared_ptr<detail::Node> p = n->parents[next++];
      if (p && p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(std::move(n));
      stack.pop_back();
    }
  }

  for (const auto& n : order) {
    if (n->consumed) {
      throw std::logic_error("backward() reached a graph that was already swept; rebuild the forward pass");
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = it->get();
    if (n->is_leaf()) continue;
    if (!n->grad.empty()) n->backward(*n);
    // Interior buffers are no longer needed; leaves keep theirs.
    n->consumed = true;
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->parents.clear();
    // Drop captured operands but keep a closure so the node stays a non-leaf.
    n->backward = [](detail::Node&) {};
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace deepsum
