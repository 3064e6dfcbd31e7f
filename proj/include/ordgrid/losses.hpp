#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>

#include "ordgrid/autodiff.hpp"
#include "ordgrid/grid.hpp"

namespace ordgrid {

struct LossWeights {
  double alpha = 0.5;  // regression term
  double beta = 0.5;   // masking-label term
};

struct LossBreakdown {
  double l_cla = 0.0;
  std::optional<double> l_reg;
  std::optional<double> l_mask;
  double total = 0.0;
};

/// Weighted objective plus the graph node carrying its gradient.
struct CompositeLoss {
  LossBreakdown breakdown;
  ad::Var total;
};

/// -log softmax(logits)[label] using the max-shifted log-sum-exp.
ad::Var softmax_cross_entropy(const ad::Var& logits, std::size_t label);

/// 0.5 * (prediction - target)^2 for a shape-{1} prediction.
ad::Var euclidean_loss(const ad::Var& prediction, double target);

/// Mean over cells of softplus(x) - t*x, targets taken from the mask bits.
ad::Var sigmoid_cross_entropy(const ad::Var& logits, const MaskLabel& mask);

/// l_cla + alpha*l_reg + beta*l_mask with absent terms contributing nothing.
/// One mask term reduces to the two-term objective, both give the three-term one.
CompositeLoss total_loss(const ad::Var& l_cla, const std::optional<ad::Var>& l_reg,
                         const std::optional<ad::Var>& l_mask, const LossWeights& weights);

}  // namespace ordgrid
