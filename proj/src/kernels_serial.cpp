#include "ordgrid/kernels.hpp"

#include <cstdint>

namespace ordgrid::kernels::serial {

void conv2d_forward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const auto ph = static_cast<std::int64_t>(d.kernel_h / 2);
  const auto pw = static_cast<std::int64_t>(d.kernel_w / 2);
  const auto H = static_cast<std::int64_t>(d.height);
  const auto W = static_cast<std::int64_t>(d.width);
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < d.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < d.kernel_w; ++kx) {
              const std::int64_t iy = y + static_cast<std::int64_t>(ky) - ph;
              const std::int64_t ix = x + static_cast<std::int64_t>(kx) - pw;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += weight[((co * d.in_channels + ci) * d.kernel_h + ky) * d.kernel_w + kx] *
                     input[(ci * d.height + iy) * d.width + ix];
            }
          }
        }
        output[(co * d.height + y) * d.width + x] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const auto ph = static_cast<std::int64_t>(d.kernel_h / 2);
  const auto pw = static_cast<std::int64_t>(d.kernel_w / 2);
  const auto H = static_cast<std::int64_t>(d.height);
  const auto W = static_cast<std::int64_t>(d.width);
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        const double g = grad_output[(co * d.height + y) * d.width + x];
        if (!grad_bias.empty()) grad_bias[co] += g;
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < d.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < d.kernel_w; ++kx) {
              const std::int64_t iy = y + static_cast<std::int64_t>(ky) - ph;
              const std::int64_t ix = x + static_cast<std::int64_t>(kx) - pw;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const std::size_t wi = ((co * d.in_channels + ci) * d.kernel_h + ky) * d.kernel_w + kx;
              const std::size_t ii = (ci * d.height + iy) * d.width + ix;
              if (!grad_weight.empty()) grad_weight[wi] += g * input[ii];
              if (!grad_input.empty()) grad_input[ii] += g * weight[wi];
            }
          }
        }
      }
    }
  }
}

void dense_forward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> output) {
  for (std::size_t o = 0; o < d.out_features; ++o) {
    double acc = bias[o];
    for (std::size_t i = 0; i < d.in_features; ++i) acc += weight[o * d.in_features + i] * input[i];
    output[o] = acc;
  }
}

void dense_backward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> grad_output, std::span<double> grad_input,
                    std::span<double> grad_weight, std::span<double> grad_bias) {
  for (std::size_t o = 0; o < d.out_features; ++o) {
    const double g = grad_output[o];
    if (!grad_bias.empty()) grad_bias[o] += g;
    for (std::size_t i = 0; i < d.in_features; ++i) {
      if (!grad_weight.empty()) grad_weight[o * d.in_features + i] += g * input[i];
      if (!grad_input.empty()) grad_input[i] += g * weight[o * d.in_features + i];
    }
  }
}

}  // namespace ordgrid::kernels::serial
