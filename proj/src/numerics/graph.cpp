#include "rwl/numerics/graph.hpp"

#include <unordered_set>
#include <utility>

namespace rwl::num {
namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) grad = Tensor::like(value);
  return grad;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "const";
  return Var(std::move(n));
}

Var parameter(Tensor value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->op = "param";
  n->name = std::move(name);
  return Var(std::move(n));
}

Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  if (g_grad_enabled)
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.node());
    n->backward = std::move(backward_fn);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward: empty root");
  if (root.size() != 1) {
    throw ShapeError("backward: root must be scalar-valued, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients start from zero on every pass.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor::like(n->value);
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

void zero_grad(std::span<const Var> params) {
  for (const auto& p : params) {
    if (p.node()->grad.size() == p.value().size()) p.node()->grad.fill(0.0);
  }
}

Var detach(const Var& v) { return constant(v.value()); }

}  // namespace rwl::num
