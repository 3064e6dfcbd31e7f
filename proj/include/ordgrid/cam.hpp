#pragma once

// Gradient-weighted class activation maps.
//
// Channel weights are the spatial sum of d(logit_c)/dF_k over the last feature
// maps, taken literally: no 1/(l*l) averaging and no ReLU on the weights.
// The map S_c = sum_k w_kc F_k keeps its sign; ReLU is only a rendering option.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "ordgrid/model.hpp"
#include "ordgrid/tensor.hpp"

namespace ordgrid {

struct CamResult {
  std::size_t class_index = 0;
  std::vector<double> channel_weights;  // length K
  Tensor raw_map;                       // l x l, signed
  std::optional<Tensor> display_map;    // H x W in [0, 1]
};

/// Backpropagates logit `class_index` and sums the feature-map gradient per channel.
/// Also accumulates into the model's parameter gradients.
std::vector<double> channel_weights(const ForwardRecord& record, std::size_t class_index);

/// Weighted sum over channels of `feature_maps` (K x l x l) -> l x l.
Tensor activation_map(const std::vector<double>& weights, const Tensor& feature_maps);

/// Optional ReLU, bilinear upsample with pixel-centre mapping
/// src = (dst + 0.5) * l / H - 0.5 clamped to [0, l-1], then min-max
/// normalisation. A constant map renders as all zeros.
Tensor render(const Tensor& raw_map, std::size_t height, std::size_t width, bool apply_relu);

CamResult compute_cam(const ForwardRecord& record, std::size_t class_index,
                      std::optional<std::pair<std::size_t, std::size_t>> display_size = std::nullopt,
                      bool apply_relu = false);

struct DropoutZeroingResult {
  std::vector<double> weights_eval;
  std::vector<double> weights_train;
};

/// Channel weights for one class in eval mode and in train mode under a fixed
/// dropout mask over the K pooled features. Requires a gap-linear head.
DropoutZeroingResult dropout_zeroing_demo(const Model& model, const Tensor& image, std::size_t class_index,
                                          const std::vector<std::uint8_t>& fixed_dropout_mask);

}  // namespace ordgrid
