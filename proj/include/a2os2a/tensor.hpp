#pragma once

// Dense tensor with reverse-mode differentiation.
//
// A Tensor is a cheap handle to a shared node. Values are fixed once the
// node is created; only leaves (parameters) may be edited in place, and only
// between forward passes. Operations record themselves on the thread's active
// Tape when at least one input requires a gradient, so inference without a
// tape builds no graph.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "a2os2a/errors.hpp"

namespace a2os2a {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename R>
class Tape;

namespace detail {

template <typename R>
struct Node {
  Shape shape;
  std::vector<R> value;
  std::vector<R> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), R(0));
  }
};

template <typename R>
Tape<R>*& active_tape() {
  thread_local Tape<R>* tape = nullptr;
  return tape;
}

}  // namespace detail

template <typename R>
class Tensor {
 public:
  using value_type = R;
  using NodePtr = std::shared_ptr<detail::Node<R>>;

  Tensor() : node_(std::make_shared<detail::Node<R>>()) {}

  Tensor(Shape shape, std::vector<R> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<R>>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " given " +
                           std::to_string(values.size()) + " elements");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<R>(n, R(0)), requires_grad);
  }
  static Tensor full(Shape shape, R value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<R>(n, value), requires_grad);
  }
  static Tensor scalar(R value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<R>{value}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const R> values() const { return node_->value; }
  R operator[](std::size_t i) const { return node_->value[i]; }
  R item() const {
    if (numel() != 1) throw RankError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  /// Gradient accumulated by the last backward pass; zeros if none reached it.
  std::span<const R> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() const { std::fill(node_->grad.begin(), node_->grad.end(), R(0)); }

  /// In-place access for leaves (optimizer updates, checkpoint loading).
  std::span<R> mutable_values() const {
    if (!node_->is_leaf) throw StateError("in-place update of a non-leaf tensor");
    return node_->value;
  }
  std::span<R> mutable_grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  /// Same values, cut off from the graph.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

/// Ordered record of the operations of one graph. Nodes are appended as they
/// are created, so the record is already in topological order.
template <typename R>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<detail::Node<R>> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Replays backward rules in reverse recording order. Throws RankError for a
  /// non-scalar loss and StateError when called again before reset().
  void backward(const Tensor<R>& loss);

  /// Drops the recorded graph so the tape can be reused.
  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::shared_ptr<detail::Node<R>>> nodes_;
  bool consumed_ = false;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
template <typename R>
class TapeScope {
 public:
  explicit TapeScope(Tape<R>& tape) : previous_(detail::active_tape<R>()) {
    detail::active_tape<R>() = &tape;
  }
  ~TapeScope() { detail::active_tape<R>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<R>* previous_;
};

/// Suspends recording, e.g. for evaluation inside a training step.
template <typename R>
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::active_tape<R>()) { detail::active_tape<R>() = nullptr; }
  ~NoGradScope() { detail::active_tape<R>() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<R>* previous_;
};

namespace detail {

/// Builds the result of an operation. When a tape is active and any input
/// requires a gradient, the node is wired into the graph and recorded.
template <typename R>
Tensor<R> make_result(Shape shape, std::vector<R> value,
                      std::initializer_list<const Tensor<R>*> inputs,
                      std::function<void(Node<R>&)> backward) {
  auto node = std::make_shared<Node<R>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape<R>* tape = active_tape<R>();
  bool any = false;
  for (const Tensor<R>* in : inputs) any = any || in->requires_grad();
  if (tape != nullptr && any) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const Tensor<R>* in : inputs) node->inputs.push_back(in->node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor<R>(std::move(node));
}

template <typename R>
Tensor<R> make_result(Shape shape, std::vector<R> value, const std::vector<Tensor<R>>& inputs,
                      std::function<void(Node<R>&)> backward) {
  auto node = std::make_shared<Node<R>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape<R>* tape = active_tape<R>();
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (tape != nullptr && any) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor<R>(std::move(node));
}

/// Gradient buffer of input `i` if it wants one, otherwise nullptr.
template <typename R>
std::vector<R>* input_grad(Node<R>& node, std::size_t i) {
  Node<R>& in = *node.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return &in.grad;
}

}  // namespace detail

}  // namespace a2os2a
