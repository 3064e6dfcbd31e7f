#include "ordgrid/cam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ordgrid {

std::vector<double> channel_weights(const ForwardRecord& record, std::size_t class_index) {
  if (!record.graph_retained) throw ad::GraphError("channel_weights: forward graph has been released");
  const auto& logits = record.class_logits->value();
  if (class_index >= logits.size())
    throw std::out_of_range("class index " + std::to_string(class_index) + " outside [0, " +
                            std::to_string(logits.size()) + ")");
  Tensor seed(logits.shape(), 0.0);
  seed[class_index] = 1.0;
  ad::backward(record.class_logits, seed);

  const Tensor& fm = record.feature_maps->value();
  require_rank(fm, 3, "feature maps");
  const std::size_t K = fm.dim(0), plane = fm.dim(1) * fm.dim(2);
  std::vector<double> w(K, 0.0);
  if (!record.feature_maps->has_grad()) return w;  // logit does not depend on the maps
  const Tensor& g = record.feature_maps->grad();
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += g[k * plane + i];
    w[k] = s;
  }
  return w;
}

Tensor activation_map(const std::vector<double>& weights, const Tensor& feature_maps) {
  require_rank(feature_maps, 3, "activation_map feature maps");
  if (weights.size() != feature_maps.dim(0))
    throw ShapeError("activation_map: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(feature_maps.dim(0)) + " channels");
  const std::size_t h = feature_maps.dim(1), w = feature_maps.dim(2);
  Tensor out(Shape{h, w}, 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k)
    for (std::size_t i = 0; i < h * w; ++i) out[i] += weights[k] * feature_maps[k * h * w + i];
  return out;
}

Tensor render(const Tensor& raw_map, std::size_t height, std::size_t width, bool apply_relu) {
  require_rank(raw_map, 2, "render input");
  const std::size_t lh = raw_map.dim(0), lw = raw_map.dim(1);
  if (height < lh || width < lw) throw ShapeError("render: target smaller than the activation map");

  Tensor src = raw_map;
  if (apply_relu)
    for (auto& v : src.data()) v = std::max(v, 0.0);

  auto source_coord = [](std::size_t dst, std::size_t src_len, std::size_t dst_len) {
    const double c = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_len) / static_cast<double>(dst_len) - 0.5;
    return std::clamp(c, 0.0, static_cast<double>(src_len - 1));
  };

  Tensor out(Shape{height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = source_coord(y, lh, height);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, lh - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = source_coord(x, lw, width);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, lw - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = src[y0 * lw + x0] * (1.0 - fx) + src[y0 * lw + x1] * fx;
      const double bottom = src[y1 * lw + x0] * (1.0 - fx) + src[y1 * lw + x1] * fx;
      out[y * width + x] = top * (1.0 - fy) + bottom * fy;
    }
  }

  const auto [lo_it, hi_it] = std::minmax_element(out.data().begin(), out.data().end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo <= 0.0) {
    out.fill(0.0);
    return out;
  }
  for (auto& v : out.data()) v = (v - lo) / (hi - lo);
  return out;
}

CamResult compute_cam(const ForwardRecord& record, std::size_t class_index,
                      std::optional<std::pair<std::size_t, std::size_t>> display_size, bool apply_relu) {
  CamResult r;
  r.class_index = class_index;
  r.channel_weights = channel_weights(record, class_index);
  r.raw_map = activation_map(r.channel_weights, record.feature_maps->value());
  if (display_size) r.display_map = render(r.raw_map, display_size->first, display_size->second, apply_relu);
  return r;
}

DropoutZeroingResult dropout_zeroing_demo(const Model& model, const Tensor& image, std::size_t class_index,
                                          const std::vector<std::uint8_t>& fixed_dropout_mask) {
  if (model.config().head_kind != HeadKind::gap_linear)
    throw ConfigError("dropout_zeroing_demo requires a gap-linear head");
  DropoutZeroingResult out;
  out.weights_eval = channel_weights(model.forward(image, Mode::eval), class_index);
  out.weights_train = channel_weights(model.forward_with_dropout(image, fixed_dropout_mask), class_index);
  return out;
}

}  // namespace ordgrid
