#include <algorithm>
#include <cmath>
#include <numeric>

#include "ordgrid/gradcheck.hpp"
#include "ordgrid/grid.hpp"
#include "ordgrid/losses.hpp"
#include "ordgrid/model.hpp"

namespace ordgrid {

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Uniform values with |v| >= margin, away from the ReLU kink.
Tensor away_from_zero(Shape shape, Rng& rng, double margin) {
  Tensor t = uniform(std::move(shape), rng);
  for (auto& v : t.data())
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  return t;
}

// Projects a tensor to a scalar through fixed random weights.
ad::Var project(const ad::Var& y, const Tensor& weights) { return ad::sum(ad::mul_const(y, weights)); }

struct Accumulator {
  GradcheckEntry entry;
  const GradcheckSuiteOptions& opt;
  Rng& rng;

  void check(const std::function<ad::Var()>& build, ad::Parameter& p) {
    const auto r = gradcheck(build, p, opt.probes, opt.step, rng);
    entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
    entry.probes += r.probes;
  }
};

ad::Parameter param(std::string name, Tensor t) { return {std::move(name), ad::variable(std::move(t)), false}; }

}  // namespace

std::vector<GradcheckEntry> run_gradcheck_suite(const GradcheckSuiteOptions& opt) {
  Rng rng(opt.seed);
  std::vector<GradcheckEntry> out;
  auto run = [&](const std::string& op, const std::function<void(Accumulator&)>& body) {
    Accumulator acc{GradcheckEntry{op, 0.0, 0, false}, opt, rng};
    body(acc);
    acc.entry.passed = acc.entry.max_rel_error < opt.tolerance;
    out.push_back(acc.entry);
  };

  run("conv2d", [&](Accumulator& a) {
    auto x = param("x", uniform({2, 5, 5}, rng));
    auto k = param("k", uniform({3, 2, 3, 3}, rng));
    auto b = param("b", uniform({3}, rng));
    const Tensor proj = uniform({3, 5, 5}, rng);
    auto f = [&] { return project(ad::conv2d(x.node, k.node, b.node), proj); };
    a.check(f, x);
    a.check(f, k);
    a.check(f, b);
    // A second, larger case so every tensor contributes at least `probes` coordinates.
    auto x2 = param("x2", uniform({4, 6, 6}, rng));
    auto k2 = param("k2", uniform({4, 4, 3, 3}, rng));
    auto b2 = param("b2", uniform({4}, rng));
    const Tensor proj2 = uniform({4, 6, 6}, rng);
    auto f2 = [&] { return project(ad::conv2d(x2.node, k2.node, b2.node), proj2); };
    a.check(f2, x2);
    a.check(f2, k2);
    a.check(f2, b2);
  });

  run("relu", [&](Accumulator& a) {
    auto x = param("x", away_from_zero({120}, rng, 1e-3));
    const Tensor proj = uniform({120}, rng);
    a.check([&] { return project(ad::relu(x.node), proj); }, x);
  });

  run("maxpool2", [&](Accumulator& a) {
    // Distinct values spaced far beyond the finite-difference step.
    std::vector<double> vals(2 * 6 * 6);
    std::iota(vals.begin(), vals.end(), 0.0);
    std::shuffle(vals.begin(), vals.end(), rng);
    for (auto& v : vals) v *= 0.01;
    auto x = param("x", Tensor({2, 6, 6}, vals));
    auto x2 = param("x2", Tensor({2, 6, 6}, [&] {
                      auto w = vals;
                      std::shuffle(w.begin(), w.end(), rng);
                      return w;
                    }()));
    const Tensor proj = uniform({2, 3, 3}, rng);
    a.check([&] { return project(ad::maxpool2(x.node), proj); }, x);
    a.check([&] { return project(ad::maxpool2(x2.node), proj); }, x2);
  });

  run("dense", [&](Accumulator& a) {
    auto x = param("x", uniform({12}, rng));
    auto w = param("w", uniform({10, 12}, rng));
    auto b = param("b", uniform({10}, rng));
    const Tensor proj = uniform({10}, rng);
    auto f = [&] { return project(ad::dense(x.node, w.node, b.node), proj); };
    a.check(f, x);
    a.check(f, w);
    a.check(f, b);
  });

  run("global_average_pool", [&](Accumulator& a) {
    auto x = param("x", uniform({7, 4, 4}, rng));
    const Tensor proj = uniform({7}, rng);
    a.check([&] { return project(ad::global_average_pool(x.node), proj); }, x);
  });

  run("sigmoid", [&](Accumulator& a) {
    auto x = param("x", uniform({120}, rng, -4.0, 4.0));
    const Tensor proj = uniform({120}, rng);
    a.check([&] { return project(ad::sigmoid(x.node), proj); }, x);
  });

  run("dropout", [&](Accumulator& a) {
    auto x = param("x", uniform({120}, rng));
    Tensor factor({120});
    std::bernoulli_distribution keep(0.5);
    for (auto& v : factor.data()) v = keep(rng) ? 2.0 : 0.0;
    const Tensor proj = uniform({120}, rng);
    a.check([&] { return project(ad::mul_const(x.node, factor), proj); }, x);
  });

  run("softmax_cross_entropy", [&](Accumulator& a) {
    for (std::size_t i = 0; i < 13; ++i) {
      auto z = param("z", uniform({8}, rng, -3.0, 3.0));
      const std::size_t label = i % 8;
      a.check([&] { return softmax_cross_entropy(z.node, label); }, z);
    }
  });

  run("sigmoid_cross_entropy", [&](Accumulator& a) {
    GridSpec spec;
    for (std::size_t i = 0; i < 4; ++i) {
      auto z = param("z", uniform({25}, rng, -3.0, 3.0));
      const auto mask = sample_mask(spec, rng);
      a.check([&] { return sigmoid_cross_entropy(z.node, mask); }, z);
    }
  });

  run("euclidean_loss", [&](Accumulator& a) {
    for (std::size_t i = 0; i < 100; ++i) {
      auto y = param("y", uniform({1}, rng, -2.0, 9.0));
      const double target = static_cast<double>(i % 8);
      a.check([&] { return euclidean_loss(y.node, target); }, y);
    }
  });

  run("composite_loss", [&](Accumulator& a) {
    ModelConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.conv_blocks = {{4, 1}, {6, 1}};
    cfg.hidden_dim = 12;
    cfg.grid_cells = 9;
    cfg.regression_head = true;
    Model model(cfg, opt.seed);
    // Zero biases over blacked-out cells would sit exactly on the ReLU kink.
    for (auto& p : model.parameters())
      if (p.node->value().rank() == 1)
        for (auto& v : p.node->mutable_value().data()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    const Tensor image = uniform({1, 16, 16}, rng, 0.0, 1.0);
    GridSpec spec;
    spec.s = 3;
    spec.p = 2.0 / 9.0;
    const auto mask = sample_mask(spec, rng);
    const Tensor masked = apply_mask(image, mask, partition(16, 16, 3), 0.0);
    std::vector<std::uint8_t> keep(cfg.hidden_dim);
    std::bernoulli_distribution kd(0.5);
    for (auto& k : keep) k = kd(rng) ? 1 : 0;
    const LossWeights weights;
    auto f = [&] {
      auto rec = model.forward_with_dropout(masked, keep);
      return total_loss(softmax_cross_entropy(rec.class_logits, 3),
                        euclidean_loss(*rec.regression_out, 3.0),
                        sigmoid_cross_entropy(rec.mask_logits, mask), weights)
          .total;
    };
    for (auto& p : model.parameters()) a.check(f, p);
  });

  return out;
}

}  // namespace ordgrid
