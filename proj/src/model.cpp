#include "ordgrid/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ordgrid {

void ModelConfig::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("input extents must be positive");
  if (conv_blocks.empty()) throw ConfigError("at least one conv block is required");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (grid_cells == 0) throw ConfigError("grid_cells must be positive");
  if (!(neuron_dropout_rate >= 0.0 && neuron_dropout_rate < 1.0))
    throw ConfigError("neuron_dropout_rate must lie in [0, 1)");
  if (head_kind == HeadKind::flatten_dense && hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  std::size_t h = height, w = width;
  for (std::size_t b = 0; b < conv_blocks.size(); ++b) {
    if (conv_blocks[b].out_channels == 0 || conv_blocks[b].convs == 0)
      throw ConfigError("conv block " + std::to_string(b) + " must have positive channels and conv count");
    if (h % 2 || w % 2)
      throw ConfigError("pooling stage " + std::to_string(b) + " receives " + std::to_string(h) + "x" +
                        std::to_string(w) + " maps; 2x2 pooling needs even extents");
    h /= 2;
    w /= 2;
    if (h < 1 || w < 1)
      throw ConfigError("pooling stage " + std::to_string(b) + " shrinks feature maps below 1x1");
  }
}

std::size_t ModelConfig::feature_channels() const { return conv_blocks.back().out_channels; }

std::size_t ModelConfig::feature_height() const { return height >> conv_blocks.size(); }

std::size_t ModelConfig::feature_width() const { return width >> conv_blocks.size(); }

std::size_t ModelConfig::feature_dim() const {
  return head_kind == HeadKind::gap_linear ? feature_channels() : hidden_dim;
}

void ForwardRecord::release() {
  if (!graph_retained) return;
  for (const auto* v : {&class_logits, &mask_logits}) ad::release_graph(*v);
  if (regression_out) ad::release_graph(*regression_out);
  graph_retained = false;
}

Model::Model(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  build(rng);
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng = derive_stream(seed, Stream::init, 0, 0);
  build(rng);
}

std::size_t Model::add_param(std::string name, Shape shape, std::size_t fan_in, Rng& rng, bool zero) {
  Tensor t(std::move(shape), 0.0);
  if (!zero) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = dist(rng);
  }
  params_.push_back({std::move(name), ad::variable(std::move(t)), false});
  return params_.size() - 1;
}

void Model::build(Rng& rng) {
  std::size_t in_ch = config_.channels;
  for (std::size_t b = 0; b < config_.conv_blocks.size(); ++b) {
    const auto& block = config_.conv_blocks[b];
    for (std::size_t c = 0; c < block.convs; ++c) {
      const std::string base = "block" + std::to_string(b) + ".conv" + std::to_string(c);
      const std::size_t fan_in = in_ch * 9;
      LayerRef ref;
      ref.weight = add_param(base + ".weight", {block.out_channels, in_ch, 3, 3}, fan_in, rng, false);
      ref.bias = add_param(base + ".bias", {block.out_channels}, fan_in, rng, true);
      conv_layers_.push_back(ref);
      in_ch = block.out_channels;
    }
  }
  const std::size_t K = config_.feature_channels();
  std::size_t feat = K;
  if (config_.head_kind == HeadKind::flatten_dense) {
    const std::size_t flat = K * config_.feature_height() * config_.feature_width();
    hidden_ = LayerRef{add_param("hidden.weight", {config_.hidden_dim, flat}, flat, rng, false),
                       add_param("hidden.bias", {config_.hidden_dim}, flat, rng, true)};
    feat = config_.hidden_dim;
  }
  class_head_ = {add_param("head.class.weight", {config_.num_classes, feat}, feat, rng, false),
                 add_param("head.class.bias", {config_.num_classes}, feat, rng, true)};
  mask_head_ = {add_param("head.mask.weight", {config_.grid_cells, feat}, feat, rng, false),
                add_param("head.mask.bias", {config_.grid_cells}, feat, rng, true)};
  if (config_.regression_head)
    regression_head_ = LayerRef{add_param("head.reg.weight", {1, feat}, feat, rng, false),
                                add_param("head.reg.bias", {1}, feat, rng, true)};
}

ad::Parameter& Model::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

const ad::Parameter& Model::parameter(const std::string& name) const {
  return const_cast<Model*>(this)->parameter(name);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.node->value().size();
  return n;
}

ForwardRecord Model::forward(const Tensor& image, Mode mode, Rng* rng) const {
  if (mode == Mode::eval || config_.neuron_dropout_rate == 0.0) {
    if (mode == Mode::train) {
      std::vector<std::uint8_t> keep(config_.feature_dim(), 1);
      return run(image, &keep, true);
    }
    return run(image, nullptr, false);
  }
  if (rng == nullptr) throw std::invalid_argument("train-mode forward needs a random generator");
  std::bernoulli_distribution keep_dist(1.0 - config_.neuron_dropout_rate);
  std::vector<std::uint8_t> keep(config_.feature_dim());
  for (auto& k : keep) k = keep_dist(*rng) ? 1 : 0;
  return run(image, &keep, true);
}

ForwardRecord Model::forward_with_dropout(const Tensor& image, const std::vector<std::uint8_t>& keep) const {
  if (keep.size() != config_.feature_dim())
    throw ShapeError("dropout mask has " + std::to_string(keep.size()) + " entries, feature vector has " +
                     std::to_string(config_.feature_dim()));
  return run(image, &keep, true);
}

ForwardRecord Model::run(const Tensor& image, const std::vector<std::uint8_t>* keep, bool train) const {
  require_shape(image, Shape{config_.channels, config_.height, config_.width}, "model input");
  auto p = [this](std::size_t i) { return params_[i].node; };

  ad::Var x = ad::constant(image);
  std::size_t layer = 0;
  for (const auto& block : config_.conv_blocks) {
    for (std::size_t c = 0; c < block.convs; ++c, ++layer) {
      const auto& ref = conv_layers_[layer];
      x = ad::relu(ad::conv2d(x, p(ref.weight), p(ref.bias)));
    }
    x = ad::maxpool2(x);
  }

  ForwardRecord rec;
  rec.feature_maps = x;
  if (config_.head_kind == HeadKind::gap_linear) {
    rec.feature_vector = ad::global_average_pool(x);
  } else {
    rec.feature_vector = ad::relu(ad::dense(ad::flatten(x), p(hidden_->weight), p(hidden_->bias)));
  }

  ad::Var features = rec.feature_vector;
  if (train && keep != nullptr) {
    // Inverted dropout: kept units scaled by 1/(1-r) so eval is the identity.
    const double scale = 1.0 / (1.0 - config_.neuron_dropout_rate);
    Tensor factor(features->value().shape());
    for (std::size_t i = 0; i < factor.size(); ++i) factor[i] = (*keep)[i] ? scale : 0.0;
    features = ad::mul_const(features, factor);
    rec.dropout_mask = *keep;
  }

  rec.class_logits = ad::dense(features, p(class_head_.weight), p(class_head_.bias));
  rec.mask_logits = ad::dense(features, p(mask_head_.weight), p(mask_head_.bias));
  if (regression_head_) rec.regression_out = ad::dense(features, p(regression_head_->weight), p(regression_head_->bias));
  return rec;
}

void Model::freeze_prefix(std::size_t n_layers) {
  if (n_layers > conv_layers_.size())
    throw std::out_of_range("freeze_prefix: model has only " + std::to_string(conv_layers_.size()) +
                            " convolution layers");
  for (std::size_t i = 0; i < n_layers; ++i) {
    params_[conv_layers_[i].weight].frozen = true;
    params_[conv_layers_[i].bias].frozen = true;
  }
}

void Model::zero_grad() {
  for (auto& p : params_) p.node->zero_grad();
}

void Model::sgd_step(double lr) {
  for (auto& p : params_) {
    if (p.frozen || !p.node->has_grad()) continue;
    auto& v = p.node->mutable_value();
    const auto& g = p.node->grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

Model Model::clone() const {
  Model m;
  m.config_ = config_;
  m.conv_layers_ = conv_layers_;
  m.hidden_ = hidden_;
  m.class_head_ = class_head_;
  m.mask_head_ = mask_head_;
  m.regression_head_ = regression_head_;
  m.params_.reserve(params_.size());
  for (const auto& p : params_) m.params_.push_back({p.name, ad::variable(p.node->value()), p.frozen});
  return m;
}

}  // namespace ordgrid
