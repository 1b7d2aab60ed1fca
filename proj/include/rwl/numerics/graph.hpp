#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rwl/numerics/tensor.hpp"

namespace rwl::num {

// One vertex of a reverse-mode computation graph. Parents are held by
// shared_ptr; children never are, so dropping the root frees the graph while
// parameter leaves survive.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";
  std::string name;

  // Gradient buffer shaped like `value`, allocated on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value, std::string name);

// Builds an interior node. When no input requires a gradient the result is a
// constant and `backward_fn` is discarded.
Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn, const char* op);

// Reverse-mode accumulation from a scalar root into every reachable node that
// requires a gradient. Parameter gradients accumulate until zero_grad.
void backward(const Var& root);

void zero_grad(std::span<const Var> params);

// Fresh constant holding the same value; cuts gradient flow.
Var detach(const Var& v);

// While alive, new nodes on this thread record no inputs or backward
// closures. Used for inference.
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

}  // namespace rwl::num
