#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ordgrid/autodiff.hpp"
#include "ordgrid/rng.hpp"
#include "ordgrid/tensor.hpp"

namespace ordgrid {

enum class HeadKind { flatten_dense, gap_linear };

struct ConvBlock {
  std::size_t out_channels = 8;
  std::size_t convs = 1;
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Stacks of 3x3 same-padded conv+ReLU layers, each block closed by a 2x2
/// max-pool, then the shared feature vector feeding the class, mask and
/// (optionally) regression heads.
struct ModelConfig {
  std::size_t channels = 1;
  std::size_t height = 48;
  std::size_t width = 48;
  std::vector<ConvBlock> conv_blocks{{8, 1}, {16, 1}, {32, 1}};
  HeadKind head_kind = HeadKind::flatten_dense;
  std::size_t hidden_dim = 64;
  std::size_t num_classes = 8;
  std::size_t grid_cells = 25;
  bool regression_head = false;
  double neuron_dropout_rate = 0.5;

  /// Throws ConfigError naming the offending stage.
  void validate() const;
  std::size_t feature_channels() const;
  /// Side lengths of the last feature maps.
  std::size_t feature_height() const;
  std::size_t feature_width() const;
  std::size_t feature_dim() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Mode { train, eval };

struct ForwardRecord {
  ad::Var feature_maps;    // K x l x l, last conv block output after pooling
  ad::Var feature_vector;  // X_n before neuron dropout
  ad::Var class_logits;
  ad::Var mask_logits;
  std::optional<ad::Var> regression_out;
  std::vector<std::uint8_t> dropout_mask;  // train mode only, 1 = kept
  bool graph_retained = true;

  /// Drops the graph; gradient queries afterwards are rejected.
  void release();
};

class Model {
 public:
  Model(ModelConfig config, Rng& rng);
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }
  ad::Parameter& parameter(const std::string& name);
  const ad::Parameter& parameter(const std::string& name) const;
  std::size_t parameter_count() const;
  std::size_t conv_layer_count() const { return conv_layers_.size(); }

  /// Train mode samples a fresh inverted-dropout mask from `rng`.
  ForwardRecord forward(const Tensor& image, Mode mode, Rng* rng = nullptr) const;
  /// Train-mode forward with a caller-supplied dropout mask over the feature vector.
  ForwardRecord forward_with_dropout(const Tensor& image, const std::vector<std::uint8_t>& keep) const;

  /// Marks the parameters of the first `n_layers` convolution layers frozen.
  void freeze_prefix(std::size_t n_layers);
  void zero_grad();
  /// p <- p - lr * grad for every non-frozen parameter.
  void sgd_step(double lr);

  /// Deep copy with the same parameter values and frozen flags.
  Model clone() const;

 private:
  struct LayerRef {
    std::size_t weight;
    std::size_t bias;
  };

  Model() = default;
  void build(Rng& rng);
  std::size_t add_param(std::string name, Shape shape, std::size_t fan_in, Rng& rng, bool zero);
  ForwardRecord run(const Tensor& image, const std::vector<std::uint8_t>* keep, bool train) const;

  ModelConfig config_;
  std::vector<ad::Parameter> params_;
  std::vector<LayerRef> conv_layers_;
  std::optional<LayerRef> hidden_;
  LayerRef class_head_{};
  LayerRef mask_head_{};
  std::optional<LayerRef> regression_head_;
};

}  // namespace ordgrid
