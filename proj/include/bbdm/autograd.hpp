#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bbdm/tensor.hpp"

namespace bbdm {

template <typename T>
struct GraphNode {
  BasicTensor<T> value;
  BasicTensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<GraphNode>> inputs;
  // Reads `grad` of this node and accumulates into the inputs' grads.
  std::function<void(GraphNode&)> backward;

  BasicTensor<T>& grad_buffer() {
    if (grad.empty()) grad = BasicTensor<T>(value.shape());
    return grad;
  }
};

/// Handle onto a node of the reverse-mode graph. Values are never mutated by
/// ops; only optimizers touch parameter values in place.
template <typename T>
class BasicVar {
 public:
  BasicVar() = default;

  static BasicVar constant(BasicTensor<T> value) { return BasicVar(std::move(value), false); }
  static BasicVar parameter(BasicTensor<T> value) { return BasicVar(std::move(value), true); }

  bool defined() const noexcept { return node_ != nullptr; }
  const BasicTensor<T>& value() const { return node_->value; }
  BasicTensor<T>& mutable_value() { return node_->value; }
  const BasicTensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  void zero_grad() const {
    if (node_) node_->grad = BasicTensor<T>();
  }

  const std::shared_ptr<GraphNode<T>>& node() const noexcept { return node_; }
  static BasicVar from_node(std::shared_ptr<GraphNode<T>> node) {
    BasicVar v;
    v.node_ = std::move(node);
    return v;
  }

 private:
  BasicVar(BasicTensor<T> value, bool requires_grad) : node_(std::make_shared<GraphNode<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  std::shared_ptr<GraphNode<T>> node_;
};

using Var = BasicVar<float>;
using Var64 = BasicVar<double>;

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active() noexcept;

 private:
  bool previous_;
};

// Creates an op result. The graph edge is recorded only when some input
// requires a gradient and recording is enabled.
template <typename T>
BasicVar<T> make_result(BasicTensor<T> value, std::initializer_list<BasicVar<T>> inputs,
                        std::function<void(GraphNode<T>&)> backward) {
  auto node = std::make_shared<GraphNode<T>>();
  node->value = std::move(value);
  if (!NoGradGuard::active()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return BasicVar<T>::from_node(std::move(node));
}

/// Reverse pass from a single-element root; gradients accumulate into every
/// reachable node that requires them.
template <typename T>
void backward(const BasicVar<T>& root);

}  // namespace bbdm
