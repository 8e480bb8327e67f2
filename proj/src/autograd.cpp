#include "bbdm/autograd.hpp"

#include <unordered_set>

namespace bbdm {

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() noexcept { return g_no_grad; }

template <typename T>
void backward(const BasicVar<T>& root) {
  if (!root.defined() || root.value().numel() != 1) {
    throw ShapeError("backward() needs a single-element root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<GraphNode<T>*> order;
  std::unordered_set<GraphNode<T>*> seen;
  std::vector<std::pair<GraphNode<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      GraphNode<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    GraphNode<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template void backward<float>(const BasicVar<float>&);
template void backward<double>(const BasicVar<double>&);

}  // namespace bbdm
