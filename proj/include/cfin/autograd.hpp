#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfin/tensor.hpp"

namespace cfin {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded value in the differentiation graph.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  bool is_leaf() const { return parents.empty(); }
  void accumulate(const Tensor& g);
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  Node& node() const { return *node_; }
  const NodePtr& ptr() const { return node_; }

  /// Overwrites a leaf value in place (optimizer updates, archive loads).
  void assign(Tensor t);
  void zero_grad() { node_->grad = Tensor(); }

 private:
  NodePtr node_;
};

/// While alive on a thread, ops on that thread record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

/// A leaf that does not receive gradients.
Var constant(Tensor t);
/// A leaf that receives gradients.
Var parameter(Tensor t);

/// Creates a non-leaf node. When no input requires a gradient the node is
/// detached and `backward_fn` is dropped, so inference builds no graph.
Var make_result(Tensor value, std::vector<Var> inputs, const char* op,
                std::function<void(Node&)> backward_fn);

/// Reverse-mode record of everything reachable from a scalar loss, in
/// topological order (every node's inputs precede it).
class GradTape {
 public:
  explicit GradTape(const Var& loss);

  const std::vector<Node*>& nodes() const { return order_; }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
  /// Leaf gradients accumulate; intermediate gradients are released.
  void backward();

 private:
  Var loss_;
  std::vector<Node*> order_;
};

/// Convenience: builds the tape for `loss` and runs it.
void backward(const Var& loss);

}  // namespace cfin
