#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ordgrid/tensor.hpp"

namespace ordgrid::ad {

class Node;
using Var = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A value in the computation graph. Leaves have no inputs; op nodes carry a
/// backward function that reads `grad()` and accumulates into the inputs.
class Node {
 public:
  Node(Tensor value, std::string op, std::vector<Var> inputs, BackwardFn backward, bool requires_grad)
      : value_(std::move(value)),
        op_(std::move(op)),
        inputs_(std::move(inputs)),
        backward_(std::move(backward)),
        requires_grad_(requires_grad) {}

  const Tensor& value() const noexcept { return value_; }
  // Only leaves may be mutated in place (optimizer updates, finite differences).
  Tensor& mutable_value();

  const std::string& op() const noexcept { return op_; }
  const std::vector<Var>& inputs() const noexcept { return inputs_; }
  bool requires_grad() const noexcept { return requires_grad_; }
  bool is_leaf() const noexcept { return op_ == "leaf"; }
  bool released() const noexcept { return released_; }

  /// Gradient buffer, zero-initialized on first access.
  Tensor& grad();
  bool has_grad() const noexcept { return !grad_.empty(); }
  void zero_grad();

  void run_backward() {
    if (backward_) backward_(*this);
  }
  void release();

 private:
  Tensor value_;
  Tensor grad_;
  std::string op_;
  std::vector<Var> inputs_;
  BackwardFn backward_;
  bool requires_grad_;
  bool released_ = false;
};

Var constant(Tensor value);
Var variable(Tensor value);

/// Builds an op node. The node requires grad iff any input does; `backward`
/// is dropped otherwise.
Var make_op(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// Reverse sweep from a scalar root with seed 1.
void backward(const Var& root);
/// Reverse sweep with an explicit seed of the root's shape. Intermediate
/// gradients are reset at the start of every sweep; leaf gradients accumulate.
void backward(const Var& root, const Tensor& seed);

/// Drops backward closures and input references of every node reachable from
/// `root`. Later backward sweeps through it are rejected.
void release_graph(const Var& root);

struct Parameter {
  std::string name;
  Var node;
  bool frozen = false;
};

// --- ops -----------------------------------------------------------------

Var conv2d(const Var& input, const Var& kernels, const Var& bias);
Var relu(const Var& x);
Var maxpool2(const Var& x);
Var dense(const Var& x, const Var& weight, const Var& bias);
Var global_average_pool(const Var& x);
Var flatten(const Var& x);
Var sigmoid(const Var& x);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(const Var& x, const Tensor& factor);
Var mul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
/// Element `index` of `x` as a shape-{1} node.
Var select(const Var& x, std::size_t index);
Var sum(const Var& x);
/// Mean of shape-{1} nodes.
Var mean(std::span<const Var> scalars);

namespace fault {
// Test fixture hook: corrupts the backward pass of the named op.
void inject(std::string op);
void clear();
bool active(std::string_view op);
}  // namespace fault

}  // namespace ordgrid::ad
