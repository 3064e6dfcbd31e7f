#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ordgrid/losses.hpp"

using namespace ordgrid;
using ad::constant;

namespace {

double value(const ad::Var& v) { return v->value()[0]; }

}  // namespace

TEST(SoftmaxCrossEntropy, UniformLogits) {
  EXPECT_NEAR(value(softmax_cross_entropy(constant(Tensor({8}, 0.3)), 5)), std::log(8.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, ConfidentCorrect) {
  Tensor z({8}, 0.0);
  z[2] = 50.0;
  EXPECT_LT(value(softmax_cross_entropy(constant(z), 2)), 1e-15);
}

TEST(SoftmaxCrossEntropy, TwoClassValue) {
  EXPECT_NEAR(value(softmax_cross_entropy(constant(Tensor::vector({1.0, 0.0})), 1)), 1.313262, 1e-6);
}

TEST(SoftmaxCrossEntropy, ShiftInvariantAndStable) {
  const Tensor z = Tensor::vector({0.3, -1.2, 2.5, 0.0});
  Tensor shifted = z;
  for (auto& v : shifted.data()) v += 700.0;
  EXPECT_LT(std::abs(value(softmax_cross_entropy(constant(z), 1)) - value(softmax_cross_entropy(constant(shifted), 1))),
            1e-12);
}

TEST(SoftmaxCrossEntropy, BadLabelThrows) {
  EXPECT_THROW(softmax_cross_entropy(constant(Tensor({8})), 8), std::out_of_range);
}

TEST(EuclideanLoss, Values) {
  EXPECT_EQ(value(euclidean_loss(constant(Tensor::scalar(4.0)), 4.0)), 0.0);
  EXPECT_DOUBLE_EQ(value(euclidean_loss(constant(Tensor::scalar(3.0)), 5.0)), 2.0);
  std::vector<ad::Var> batch{euclidean_loss(constant(Tensor::scalar(1.0)), 1.0),
                             euclidean_loss(constant(Tensor::scalar(0.0)), 2.0)};
  EXPECT_DOUBLE_EQ(value(ad::mean(batch)), 1.0);
}

TEST(SigmoidCrossEntropy, Values) {
  EXPECT_NEAR(value(sigmoid_cross_entropy(constant(Tensor({4}, 0.0)), MaskLabel{{1, 0, 1, 1}})), std::log(2.0), 1e-12);
  EXPECT_LT(value(sigmoid_cross_entropy(constant(Tensor::vector({20.0})), MaskLabel{{1}})), 1e-8);
  EXPECT_NEAR(value(sigmoid_cross_entropy(constant(Tensor::vector({2.0, -2.0})), MaskLabel{{1, 0}})), 0.126928, 1e-6);
}

TEST(SigmoidCrossEntropy, ExtremeLogitsFinite) {
  auto z = ad::variable(Tensor::vector({500.0, -500.0, 500.0, -500.0}));
  auto l = sigmoid_cross_entropy(z, MaskLabel{{1, 0, 0, 1}});
  EXPECT_TRUE(std::isfinite(value(l)));
  EXPECT_NEAR(value(l), 250.0, 1e-9);
  ad::backward(l);
  EXPECT_TRUE(z->grad().all_finite());
}

TEST(SigmoidCrossEntropy, SizeMismatchThrows) {
  EXPECT_THROW(sigmoid_cross_entropy(constant(Tensor({3})), MaskLabel{{1, 0}}), ShapeError);
}

TEST(TotalLoss, WeightedSums) {
  const LossWeights w{0.5, 0.5};
  auto cla = constant(Tensor::scalar(1.0));
  auto reg = constant(Tensor::scalar(0.6));
  auto mask = constant(Tensor::scalar(0.4));
  const auto two = total_loss(cla, std::nullopt, mask, w);
  EXPECT_DOUBLE_EQ(two.breakdown.total, 1.2);
  EXPECT_FALSE(two.breakdown.l_reg);
  EXPECT_DOUBLE_EQ(*two.breakdown.l_mask, 0.4);
  EXPECT_DOUBLE_EQ(total_loss(cla, reg, mask, w).breakdown.total, 1.5);
  EXPECT_DOUBLE_EQ(value(total_loss(cla, reg, mask, w).total), 1.5);
}

TEST(TotalLoss, ZeroBetaIsClassificationOnly) {
  auto cla = constant(Tensor::scalar(0.8125));
  const auto r = total_loss(cla, std::nullopt, constant(Tensor::scalar(3.0)), LossWeights{0.5, 0.0});
  EXPECT_EQ(r.breakdown.total, 0.8125);
  EXPECT_EQ(total_loss(cla, std::nullopt, std::nullopt, {}).breakdown.total, 0.8125);
}

TEST(TotalLoss, RejectsBadWeights) {
  auto cla = constant(Tensor::scalar(1.0));
  EXPECT_THROW(total_loss(cla, std::nullopt, std::nullopt, LossWeights{-1.0, 0.5}), std::invalid_argument);
  EXPECT_THROW(total_loss(cla, std::nullopt, std::nullopt, LossWeights{0.5, NAN}), std::invalid_argument);
}
