#include "ordgrid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ordgrid {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ad::Var softmax_cross_entropy(const ad::Var& logits, std::size_t label) {
  const Tensor& z = logits->value();
  require_rank(z, 1, "softmax_cross_entropy logits");
  if (label >= z.size())
    throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(z.size()) + ")");
  const double zmax = *std::max_element(z.data().begin(), z.data().end());
  double denom = 0.0;
  for (double v : z.data()) denom += std::exp(v - zmax);
  const double lse = zmax + std::log(denom);
  const double loss = lse - z[label];

  std::vector<double> probs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) probs[i] = std::exp(z[i] - lse);

  return ad::make_op("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                     [probs = std::move(probs), label](ad::Node& self) {
                       auto& g = self.inputs()[0]->grad();
                       const double up = self.grad()[0];
                       for (std::size_t i = 0; i < probs.size(); ++i)
                         g[i] += up * (probs[i] - (i == label ? 1.0 : 0.0));
                     });
}

ad::Var euclidean_loss(const ad::Var& prediction, double target) {
  if (prediction->value().size() != 1) throw ShapeError("euclidean_loss: prediction must be a scalar");
  const double diff = prediction->value()[0] - target;
  return ad::make_op("euclidean_loss", Tensor::scalar(0.5 * diff * diff), {prediction}, [diff](ad::Node& self) {
    self.inputs()[0]->grad()[0] += self.grad()[0] * diff;
  });
}

ad::Var sigmoid_cross_entropy(const ad::Var& logits, const MaskLabel& mask) {
  const Tensor& x = logits->value();
  require_rank(x, 1, "sigmoid_cross_entropy logits");
  if (x.size() != mask.size())
    throw ShapeError("sigmoid_cross_entropy: " + std::to_string(x.size()) + " logits vs " +
                     std::to_string(mask.size()) + " mask bits");
  const double n = static_cast<double>(x.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) loss += softplus(x[i]) - static_cast<double>(mask.bits[i]) * x[i];
  loss /= n;
  return ad::make_op("sigmoid_cross_entropy", Tensor::scalar(loss), {logits}, [mask, n](ad::Node& self) {
    const auto& xv = self.inputs()[0]->value();
    auto& g = self.inputs()[0]->grad();
    const double up = self.grad()[0];
    for (std::size_t i = 0; i < xv.size(); ++i)
      g[i] += up * (stable_sigmoid(xv[i]) - static_cast<double>(mask.bits[i])) / n;
  });
}

CompositeLoss total_loss(const ad::Var& l_cla, const std::optional<ad::Var>& l_reg,
                         const std::optional<ad::Var>& l_mask, const LossWeights& weights) {
  if (!(weights.alpha >= 0.0) || !(weights.beta >= 0.0) || !std::isfinite(weights.alpha) ||
      !std::isfinite(weights.beta))
    throw std::invalid_argument("loss weights must be finite and non-negative");
  CompositeLoss out;
  out.breakdown.l_cla = l_cla->value()[0];
  out.total = l_cla;
  if (l_reg) {
    out.breakdown.l_reg = (*l_reg)->value()[0];
    out.total = ad::add(out.total, ad::scale(*l_reg, weights.alpha));
  }
  if (l_mask) {
    out.breakdown.l_mask = (*l_mask)->value()[0];
    out.total = ad::add(out.total, ad::scale(*l_mask, weights.beta));
  }
  out.breakdown.total = out.total->value()[0];
  return out;
}

}  // namespace ordgrid
