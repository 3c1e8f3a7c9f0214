#include "cfin/autograd.hpp"

#include <unordered_set>

namespace cfin {
namespace {
thread_local bool g_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  if (grad.empty()) {
    grad = g;
  } else {
    grad.add_inplace(g);
  }
}

void Var::assign(Tensor t) {
  if (t.shape() != node_->value.shape()) {
    throw ShapeError("assign: " + to_string(t.shape()) + " into " + to_string(node_->value.shape()));
  }
  node_->value = std::move(t);
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_result(Tensor value, std::vector<Var> inputs, const char* op,
                std::function<void(Node&)> backward_fn) {
  value.check_finite(op);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  if (g_no_grad) inputs.clear();
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(n));
}

GradTape::GradTape(const Var& loss) : loss_(loss) {
  if (!loss.defined() || numel(loss.shape()) != 1) {
    throw ShapeError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss is disconnected from every parameter");
  }
  // Iterative post-order DFS so deep graphs do not overflow the stack.
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void GradTape::backward() {
  Node& root = loss_.node();
  root.accumulate(Tensor(root.value.shape(), 1.0));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf()) continue;
    if (!n->grad.empty() && n->backward_fn) n->backward_fn(*n);
    n->grad = Tensor();
  }
  for (Node* n : order_) {
    if (n->is_leaf() && !n->grad.empty()) n->grad.check_finite("backward (NaN gradient)");
  }
}

void backward(const Var& loss) {
  GradTape tape(loss);
  tape.backward();
}

}  // namespace cfin
