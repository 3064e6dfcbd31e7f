#pragma once

// Convolution and dense kernels on raw row-major buffers.
//
// `serial` holds the straightforward reference loops used by the tests and
// the benchmark baseline. `omp` holds the OpenMP versions used by the
// autodiff ops. Each output element of an `omp` kernel is accumulated by a
// single thread in a fixed order, so results do not depend on thread count.
//
// All backward kernels accumulate (+=) into their gradient buffers.

#include <cstddef>
#include <span>

namespace ordgrid::kernels {

struct ConvDims {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t height;
  std::size_t width;
  std::size_t kernel_h;
  std::size_t kernel_w;

  std::size_t input_size() const { return in_channels * height * width; }
  std::size_t output_size() const { return out_channels * height * width; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
};

struct DenseDims {
  std::size_t in_features;
  std::size_t out_features;
};

namespace serial {

void conv2d_forward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void conv2d_backward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void dense_forward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> output);
void dense_backward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> grad_output, std::span<double> grad_input,
                    std::span<double> grad_weight, std::span<double> grad_bias);

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
// Empty gradient spans are skipped.
void conv2d_backward(const ConvDims& d, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void dense_forward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> output);
void dense_backward(const DenseDims& d, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> grad_output, std::span<double> grad_input,
                    std::span<double> grad_weight, std::span<double> grad_bias);

}  // namespace omp

int max_threads();

}  // namespace ordgrid::kernels
