#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ordgrid/kernels.hpp"

using namespace ordgrid::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Kernels, ConvForwardMatchesSerial) {
  std::mt19937_64 rng(1);
  for (ConvDims d : {ConvDims{1, 4, 9, 7, 3, 3}, ConvDims{3, 5, 6, 6, 5, 3}, ConvDims{2, 2, 4, 4, 1, 1}}) {
    auto in = random_vec(d.input_size(), rng);
    auto w = random_vec(d.weight_size(), rng);
    auto b = random_vec(d.out_channels, rng);
    std::vector<double> a(d.output_size()), c(d.output_size());
    serial::conv2d_forward(d, in, w, b, a);
    omp::conv2d_forward(d, in, w, b, c);
    EXPECT_EQ(a, c);
  }
}

TEST(Kernels, ConvBackwardMatchesSerial) {
  std::mt19937_64 rng(2);
  ConvDims d{3, 4, 8, 6, 3, 3};
  auto in = random_vec(d.input_size(), rng);
  auto w = random_vec(d.weight_size(), rng);
  auto go = random_vec(d.output_size(), rng);
  std::vector<double> gi_a(d.input_size(), 0.5), gw_a(d.weight_size(), 0.5), gb_a(d.out_channels, 0.5);
  auto gi_b = gi_a, gw_b = gw_a, gb_b = gb_a;
  serial::conv2d_backward(d, in, w, go, gi_a, gw_a, gb_a);
  omp::conv2d_backward(d, in, w, go, gi_b, gw_b, gb_b);
  for (std::size_t i = 0; i < gi_a.size(); ++i) EXPECT_NEAR(gi_a[i], gi_b[i], 1e-12);
  for (std::size_t i = 0; i < gw_a.size(); ++i) EXPECT_NEAR(gw_a[i], gw_b[i], 1e-12);
  for (std::size_t i = 0; i < gb_a.size(); ++i) EXPECT_NEAR(gb_a[i], gb_b[i], 1e-12);
}

TEST(Kernels, DenseMatchesSerial) {
  std::mt19937_64 rng(3);
  DenseDims d{37, 11};
  auto in = random_vec(d.in_features, rng);
  auto w = random_vec(d.in_features * d.out_features, rng);
  auto b = random_vec(d.out_features, rng);
  std::vector<double> a(d.out_features), c(d.out_features);
  serial::dense_forward(d, in, w, b, a);
  omp::dense_forward(d, in, w, b, c);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], c[i], 1e-12);

  auto go = random_vec(d.out_features, rng);
  std::vector<double> gi_a(d.in_features), gw_a(w.size()), gb_a(d.out_features);
  auto gi_b = gi_a, gw_b = gw_a, gb_b = gb_a;
  serial::dense_backward(d, in, w, go, gi_a, gw_a, gb_a);
  omp::dense_backward(d, in, w, go, gi_b, gw_b, gb_b);
  for (std::size_t i = 0; i < gi_a.size(); ++i) EXPECT_NEAR(gi_a[i], gi_b[i], 1e-12);
  for (std::size_t i = 0; i < gw_a.size(); ++i) EXPECT_NEAR(gw_a[i], gw_b[i], 1e-12);
  for (std::size_t i = 0; i < gb_a.size(); ++i) EXPECT_NEAR(gb_a[i], gb_b[i], 1e-12);
}

TEST(Kernels, SerialConvSamePaddingByHand) {
  // 3x3 box filter over a 3x3 ramp; corners see only the in-bounds neighbours.
  ConvDims d{1, 1, 3, 3, 3, 3};
  std::vector<double> in{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> w(9, 1.0), b{0.0}, out(9);
  serial::conv2d_forward(d, in, w, b, out);
  EXPECT_DOUBLE_EQ(out[0], 1 + 2 + 4 + 5);
  EXPECT_DOUBLE_EQ(out[4], 45.0);
  EXPECT_DOUBLE_EQ(out[8], 5 + 6 + 8 + 9);
}
