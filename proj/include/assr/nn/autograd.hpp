#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "assr/nn/tensor.hpp"

namespace assr::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Interior nodes keep their parents
/// alive only while some downstream Var is referenced, so inference with no
/// gradient-requiring leaves builds no graph at all.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  /// Propagates `self.grad` into the parents' grads.
  std::function<void(Node& self)> backward;

  /// grad += g, allocating the buffer on first use.
  void accumulate(const Tensor& g);
};

/// Handle to a node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimizers and checkpoint loading. Leaves only.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  void zero_grad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Builds an op result. Parents are recorded only when one of them requires
/// a gradient; otherwise `backward_fn` is dropped.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Reverse sweep from a scalar (single-element) root with seed gradient 1.
void backward(const Var& root);

/// Disables graph recording on the current thread while alive.
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

/// Constant leaf.
inline Var constant(Tensor t) { return Var(std::move(t), false); }
/// Leaf with the same value and no history.
Var detach(const Var& v);

}  // namespace assr::nn
