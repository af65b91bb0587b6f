#include "assr/nn/autograd.hpp"

#include <unordered_set>

#include "assr/errors.hpp"

namespace assr::nn {

void Node::accumulate(const Tensor& g) {
  if (grad.empty() && !value.empty()) {
    grad = g;
    return;
  }
  grad.add_(g);
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& p : parents) {
    if (g_grad_enabled && p.defined() && p.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (Var& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

Var detach(const Var& v) { return Var(v.value(), false); }

void backward(const Var& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Interior gradients are only needed during the sweep.
  for (Node* node : order) {
    if (!node->parents.empty()) node->grad = Tensor();
  }
}

}  // namespace assr::nn
