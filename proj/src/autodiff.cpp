#include "ordgrid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>
#include <unordered_set>

#include "ordgrid/kernels.hpp"

namespace ordgrid::ad {

Tensor& Node::mutable_value() {
  if (!is_leaf()) throw GraphError("only leaf values may be modified, not '" + op_ + "' outputs");
  return value_;
}

Tensor& Node::grad() {
  if (grad_.empty()) grad_ = Tensor(value_.shape(), 0.0);
  return grad_;
}

void Node::zero_grad() {
  if (!grad_.empty()) grad_.fill(0.0);
}

void Node::release() {
  if (is_leaf()) return;
  backward_ = nullptr;
  inputs_.clear();
  released_ = true;
}

Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), "leaf", std::vector<Var>{}, nullptr, false); }

Var variable(Tensor value) { return std::make_shared<Node>(std::move(value), "leaf", std::vector<Var>{}, nullptr, true); }

Var make_op(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  const bool rg = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v->requires_grad(); });
  if (!rg) {
    backward = nullptr;
  }
  return std::make_shared<Node>(std::move(value), std::move(op), std::move(inputs), std::move(backward), rg);
}

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs().size()) {
      Node* child = node->inputs()[next++].get();
      if (child->requires_grad() && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

}  // namespace

void backward(const Var& root) {
  if (root->value().size() != 1)
    throw ShapeError("backward without seed requires a scalar root, got " + shape_str(root->value().shape()));
  backward(root, Tensor(root->value().shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  if (root->released()) throw GraphError("graph has been released");
  require_shape(seed, root->value().shape(), "backward seed");
  if (!root->requires_grad()) return;
  auto order = topo_order(root.get());
  for (Node* n : order) {
    if (n->released()) throw GraphError("graph has been released");
    if (!n->is_leaf()) n->zero_grad();
  }
  auto& g = root->grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf() && n->has_grad()) n->run_backward();
  }
}

void release_graph(const Var& root) {
  std::vector<Var> stack{root};
  std::unordered_set<Node*> seen{root.get()};
  while (!stack.empty()) {
    Var n = stack.back();
    stack.pop_back();
    for (const auto& in : n->inputs())
      if (seen.insert(in.get()).second) stack.push_back(in);
    n->release();
  }
}

namespace fault {
namespace {
std::mutex g_mutex;
std::set<std::string, std::less<>> g_ops;
}  // namespace

void inject(std::string op) {
  std::lock_guard lock(g_mutex);
  g_ops.insert(std::move(op));
}
void clear() {
  std::lock_guard lock(g_mutex);
  g_ops.clear();
}
bool active(std::string_view op) {
  std::lock_guard lock(g_mutex);
  return g_ops.find(op) != g_ops.end();
}
}  // namespace fault

// --- ops -----------------------------------------------------------------

namespace {

std::span<double> grad_if(const Var& v) {
  if (!v->requires_grad()) return {};
  return v->grad().data();
}

}  // namespace

Var conv2d(const Var& input, const Var& kernels, const Var& bias) {
  const Tensor& x = input->value();
  const Tensor& k = kernels->value();
  require_rank(x, 3, "conv2d input");
  require_rank(k, 4, "conv2d kernels");
  require_rank(bias->value(), 1, "conv2d bias");
  if (k.dim(1) != x.dim(0))
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(0)));
  if (bias->value().dim(0) != k.dim(0)) throw ShapeError("conv2d: bias length must equal output channels");
  if (k.dim(2) % 2 == 0 || k.dim(3) % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");

  const kernels::ConvDims d{x.dim(0), k.dim(0), x.dim(1), x.dim(2), k.dim(2), k.dim(3)};
  Tensor out(Shape{d.out_channels, d.height, d.width});
  kernels::omp::conv2d_forward(d, x.data(), k.data(), bias->value().data(), out.data());

  return make_op("conv2d", std::move(out), {input, kernels, bias}, [d](Node& self) {
    const auto& in = self.inputs();
    auto gw = grad_if(in[1]);
    kernels::omp::conv2d_backward(d, in[0]->value().data(), in[1]->value().data(), self.grad().data(),
                                  grad_if(in[0]), gw, grad_if(in[2]));
    if (fault::active("conv2d"))
      for (auto& g : gw) g += 1e-3;
  });
}

Var relu(const Var& x) {
  Tensor out = x->value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_op("relu", std::move(out), {x}, [](Node& self) {
    const auto& xin = self.inputs()[0];
    auto& gx = xin->grad();
    const auto& xv = xin->value();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
    if (fault::active("relu")) gx[0] += 1e-3;
  });
}

Var maxpool2(const Var& x) {
  const Tensor& v = x->value();
  require_rank(v, 3, "maxpool2 input");
  const std::size_t C = v.dim(0), H = v.dim(1), W = v.dim(2);
  if (H % 2 || W % 2)
    throw ShapeError("maxpool2: spatial extents must be even, got " + shape_str(v.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out(Shape{C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t xo = 0; xo < Wo; ++xo) {
        // Row-major window scan; strict comparison keeps the first maximum.
        std::size_t best = (c * H + 2 * y) * W + 2 * xo;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * H + 2 * y + dy) * W + 2 * xo + dx;
            if (v[idx] > v[best]) best = idx;
          }
        }
        const std::size_t o = (c * Ho + y) * Wo + xo;
        out[o] = v[best];
        argmax[o] = best;
      }
    }
  }
  return make_op("maxpool2", std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const auto& g = self.grad();
    for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
    if (fault::active("maxpool2")) gx[argmax[0]] += 1e-3;
  });
}

Var dense(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x->value();
  const Tensor& w = weight->value();
  require_rank(xv, 1, "dense input");
  require_rank(w, 2, "dense weight");
  require_rank(bias->value(), 1, "dense bias");
  if (w.dim(1) != xv.dim(0))
    throw ShapeError("dense: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(xv.shape()));
  if (bias->value().dim(0) != w.dim(0)) throw ShapeError("dense: bias length must equal output features");
  const kernels::DenseDims d{w.dim(1), w.dim(0)};
  Tensor out(Shape{d.out_features});
  kernels::omp::dense_forward(d, xv.data(), w.data(), bias->value().data(), out.data());
  return make_op("dense", std::move(out), {x, weight, bias}, [d](Node& self) {
    const auto& in = self.inputs();
    auto gw = grad_if(in[1]);
    kernels::omp::dense_backward(d, in[0]->value().data(), in[1]->value().data(), self.grad().data(),
                                 grad_if(in[0]), gw, grad_if(in[2]));
    if (fault::active("dense") && !gw.empty()) gw[0] += 1e-3;
  });
}

Var global_average_pool(const Var& x) {
  const Tensor& v = x->value();
  require_rank(v, 3, "global_average_pool input");
  const std::size_t K = v.dim(0), plane = v.dim(1) * v.dim(2);
  Tensor out(Shape{K});
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += v[k * plane + i];
    out[k] = s / static_cast<double>(plane);
  }
  return make_op("global_average_pool", std::move(out), {x}, [plane](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const auto& g = self.grad();
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t k = 0; k < g.size(); ++k)
      for (std::size_t i = 0; i < plane; ++i) gx[k * plane + i] += g[k] * inv;
    if (fault::active("global_average_pool")) gx[0] += 1e-3;
  });
}

Var flatten(const Var& x) {
  Tensor out = x->value().reshaped(Shape{x->value().size()});
  return make_op("flatten", std::move(out), {x}, [](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value();
  for (auto& v : out.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return make_op("sigmoid", std::move(out), {x}, [](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const auto& y = self.value();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var mul_const(const Var& x, const Tensor& factor) {
  require_shape(factor, x->value().shape(), "mul_const factor");
  Tensor out = x->value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return make_op("mul_const", std::move(out), {x}, [factor](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_shape(b->value(), a->value().shape(), "mul rhs");
  Tensor out = a->value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value()[i];
  return make_op("mul", std::move(out), {a, b}, [](Node& self) {
    const auto& in = self.inputs();
    const auto& g = self.grad();
    if (in[0]->requires_grad()) {
      auto& ga = in[0]->grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * in[1]->value()[i];
    }
    if (in[1]->requires_grad()) {
      auto& gb = in[1]->grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * in[0]->value()[i];
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_shape(b->value(), a->value().shape(), "add rhs");
  Tensor out = a->value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value()[i];
  return make_op("add", std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad();
    for (const auto& in : self.inputs()) {
      if (!in->requires_grad()) continue;
      auto& gi = in->grad();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x->value();
  for (auto& v : out.data()) v *= factor;
  return make_op("scale", std::move(out), {x}, [factor](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const auto& g = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Var select(const Var& x, std::size_t index) {
  if (index >= x->value().size())
    throw ShapeError("select: index " + std::to_string(index) + " out of range for " + shape_str(x->value().shape()));
  return make_op("select", Tensor::scalar(x->value()[index]), {x}, [index](Node& self) {
    self.inputs()[0]->grad()[index] += self.grad()[0];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x->value().data()) s += v;
  return make_op("sum", Tensor::scalar(s), {x}, [](Node& self) {
    auto& gx = self.inputs()[0]->grad();
    const double g = self.grad()[0];
    for (auto& v : gx.data()) v += g;
  });
}

Var mean(std::span<const Var> scalars) {
  if (scalars.empty()) throw ShapeError("mean of an empty set");
  double s = 0.0;
  for (const auto& v : scalars) {
    if (v->value().size() != 1) throw ShapeError("mean expects scalar nodes");
    s += v->value()[0];
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  return make_op("mean", Tensor::scalar(s * inv), std::vector<Var>(scalars.begin(), scalars.end()), [inv](Node& self) {
    const double g = self.grad()[0] * inv;
    for (const auto& in : self.inputs())
      if (in->requires_grad()) in->grad()[0] += g;
  });
}

}  // namespace ordgrid::ad
