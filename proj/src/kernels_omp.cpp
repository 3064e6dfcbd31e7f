#include "ordgrid/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdint>

namespace ordgrid::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace {

// Valid output range [lo, hi) along one axis for a tap at offset `off`.
inline void tap_range(std::int64_t extent, std::int64_t off, std::int64_t& lo, std::int64_t& hi) {
  lo = std::max<std::int64_t>(0, -off);
  hi = std::min<std::int64_t>(extent, extent - off);
}

}  // namespace

namespace omp {

void conv2d_forward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const auto H = static_cast<std::int64_t>(d.height);
  const auto W = static_cast<std::int64_t>(d.width);
  const auto ph = static_cast<std::int64_t>(d.kernel_h / 2);
  const auto pw = static_cast<std::int64_t>(d.kernel_w / 2);
  const std::size_t plane = d.height * d.width;
  const auto out_channels = static_cast<std::int64_t>(d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < out_channels; ++co) {
    double* out = output.data() + co * plane;
    std::fill(out, out + plane, bias[co]);
    for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
      const double* in = input.data() + ci * plane;
      const double* w = weight.data() + (co * d.in_channels + ci) * d.kernel_h * d.kernel_w;
      for (std::size_t ky = 0; ky < d.kernel_h; ++ky) {
        const std::int64_t dy = static_cast<std::int64_t>(ky) - ph;
        std::int64_t y0, y1;
        tap_range(H, dy, y0, y1);
        for (std::size_t kx = 0; kx < d.kernel_w; ++kx) {
          const std::int64_t dx = static_cast<std::int64_t>(kx) - pw;
          std::int64_t x0, x1;
          tap_range(W, dx, x0, x1);
          const double wv = w[ky * d.kernel_w + kx];
          for (std::int64_t y = y0; y < y1; ++y) {
            double* orow = out + y * W;
            const double* irow = in + (y + dy) * W + dx;
            for (std::int64_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

void conv2d_backward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const auto H = static_cast<std::int64_t>(d.height);
  const auto W = static_cast<std::int64_t>(d.width);
  const auto ph = static_cast<std::int64_t>(d.kernel_h / 2);
  const auto pw = static_cast<std::int64_t>(d.kernel_w / 2);
  const std::size_t plane = d.height * d.width;
  const std::size_t taps = d.kernel_h * d.kernel_w;
  const auto out_channels = static_cast<std::int64_t>(d.out_channels);
  const auto in_channels = static_cast<std::int64_t>(d.in_channels);

  if (!grad_weight.empty() || !grad_bias.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t co = 0; co < out_channels; ++co) {
      const double* gout = grad_output.data() + co * plane;
      if (!grad_bias.empty()) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += gout[i];
        grad_bias[co] += s;
      }
      if (grad_weight.empty()) continue;
      for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
        const double* in = input.data() + ci * plane;
        double* gw = grad_weight.data() + (co * d.in_channels + ci) * taps;
        for (std::size_t ky = 0; ky < d.kernel_h; ++ky) {
          const std::int64_t dy = static_cast<std::int64_t>(ky) - ph;
          std::int64_t y0, y1;
          tap_range(H, dy, y0, y1);
          for (std::size_t kx = 0; kx < d.kernel_w; ++kx) {
            const std::int64_t dx = static_cast<std::int64_t>(kx) - pw;
            std::int64_t x0, x1;
            tap_range(W, dx, x0, x1);
            double s = 0.0;
            for (std::int64_t y = y0; y < y1; ++y) {
              const double* grow = gout + y * W;
              const double* irow = in + (y + dy) * W + dx;
              for (std::int64_t x = x0; x < x1; ++x) s += grow[x] * irow[x];
            }
            gw[ky * d.kernel_w + kx] += s;
          }
        }
      }
    }
  }

  if (!grad_input.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t ci = 0; ci < in_channels; ++ci) {
      double* gin = grad_input.data() + ci * plane;
      for (std::size_t co = 0; co < d.out_channels; ++co) {
        const double* gout = grad_output.data() + co * plane;
        const double* w = weight.data() + (co * d.in_channels + ci) * taps;
        for (std::size_t ky = 0; ky < d.kernel_h; ++ky) {
          const std::int64_t dy = static_cast<std::int64_t>(ky) - ph;
          std::int64_t y0, y1;
          tap_range(H, dy, y0, y1);
          for (std::size_t kx = 0; kx < d.kernel_w; ++kx) {
            const std::int64_t dx = static_cast<std::int64_t>(kx) - pw;
            std::int64_t x0, x1;
            tap_range(W, dx, x0, x1);
            const double wv = w[ky * d.kernel_w + kx];
            for (std::int64_t y = y0; y < y1; ++y) {
              const double* grow = gout + y * W;
              double* irow = gin + (y + dy) * W + dx;
              for (std::int64_t x = x0; x < x1; ++x) irow[x] += wv * grow[x];
            }
          }
        }
      }
    }
  }
}

void dense_forward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> output) {
  const auto out_features = static_cast<std::int64_t>(d.out_features);
#pragma omp parallel for schedule(static) if (d.out_features * d.in_features > 16384)
  for (std::int64_t o = 0; o < out_features; ++o) {
    const double* row = weight.data() + o * d.in_features;
    double acc = 0.0;
    for (std::size_t i = 0; i < d.in_features; ++i) acc += row[i] * input[i];
    output[o] = bias[o] + acc;
  }
}

void dense_backward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> grad_output, std::span<double> grad_input,
                    std::span<double> grad_weight, std::span<double> grad_bias) {
  const auto out_features = static_cast<std::int64_t>(d.out_features);
  const auto in_features = static_cast<std::int64_t>(d.in_features);
  const bool big = d.out_features * d.in_features > 16384;

  if (!grad_weight.empty() || !grad_bias.empty()) {
#pragma omp parallel for schedule(static) if (big)
    for (std::int64_t o = 0; o < out_features; ++o) {
      const double g = grad_output[o];
      if (!grad_bias.empty()) grad_bias[o] += g;
      if (grad_weight.empty() || g == 0.0) continue;
      double* row = grad_weight.data() + o * d.in_features;
      for (std::size_t i = 0; i < d.in_features; ++i) row[i] += g * input[i];
    }
  }
  if (!grad_input.empty()) {
#pragma omp parallel for schedule(static) if (big)
    for (std::int64_t i = 0; i < in_features; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < d.out_features; ++o) acc += weight[o * d.in_features + i] * grad_output[o];
      grad_input[i] += acc;
    }
  }
}

}  // namespace omp
}  // namespace ordgrid::kernels
