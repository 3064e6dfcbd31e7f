#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordgrid/grid.hpp"
#include "ordgrid/losses.hpp"
#include "ordgrid/model.hpp"
#include "ordgrid/sample.hpp"

namespace ordgrid {

enum class TrainMode { neuron, neuron_grid, neuron_grid_masking };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);
inline bool uses_grid(TrainMode m) { return m != TrainMode::neuron; }
inline bool uses_mask_loss(TrainMode m) { return m == TrainMode::neuron_grid_masking; }

struct TrainConfig {
  double base_lr = 0.001;
  double decay_factor = 0.5;
  std::size_t decay_every = 5000;
  std::size_t batch_size = 64;
  std::size_t epochs = 150;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs
  LossWeights weights;
  TrainMode mode = TrainMode::neuron_grid_masking;
  bool use_regression = false;
  GridSpec grid;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0: evaluate only at the end
  std::size_t freeze_layers = 0;

  void validate() const;
};

/// base_lr * decay_factor^floor(step / decay_every)
double lr_at(const TrainConfig& config, std::size_t step);

class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(std::size_t step, const std::string& what) : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// One SGD step on a prepared batch (grid modes expect masked samples).
/// Forward in train mode, batch-mean composite loss, zero-grad, backward,
/// then p <- p - lr * g for non-frozen parameters.
LossBreakdown train_step(Model& model, std::span<const Sample> batch, const TrainConfig& config, std::size_t step,
                         Rng& rng);

struct EvalResult {
  double mean_loss = 0.0;  // classification loss on clean images
  double accuracy = 0.0;
};

EvalResult evaluate(const Model& model, std::span<const Sample> samples);

/// Fraction of rows whose first maximal logit equals the label.
double accuracy_from_logits(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels);

struct EvalRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  // clean training images, eval mode
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

struct FoldResult {
  std::vector<EvalRecord> records;
  std::size_t steps = 0;
  double final_accuracy = 0.0;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;
  double generalization_gap() const { return final_test_loss - final_train_loss; }
};

struct TrainHooks {
  std::function<void(std::size_t step, const LossBreakdown&, double lr)> on_step;
  /// Sees every image fed to a training forward, after augmentation.
  std::function<void(const Sample&)> on_train_sample;
};

FoldResult train_fold(Model& model, const std::vector<Sample>& train, const std::vector<Sample>& test,
                      const TrainConfig& config, const TrainHooks& hooks = {});

/// Initialisation seed shared by every mode for one (seed, fold) cell.
std::uint64_t init_seed(std::uint64_t seed, std::size_t fold);

struct RunReport {
  TrainMode mode = TrainMode::neuron_grid_masking;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
};

/// Stratified k-fold cross-validation of one mode. `on_fold_model` receives
/// each trained model (e.g. for checkpointing).
RunReport run_cross_validation(const std::vector<Sample>& data, const ModelConfig& model_config,
                               const TrainConfig& config, std::size_t folds, const TrainHooks& hooks = {},
                               const std::function<void(std::size_t, const Model&)>& on_fold_model = {});

struct AblationCell {
  double accuracy = 0.0;
  double gap = 0.0;
};

struct AblationTable {
  std::vector<TrainMode> modes;
  std::vector<std::uint64_t> seeds;
  std::size_t folds = 0;
  // cells[mode][seed][fold]
  std::vector<std::vector<std::vector<AblationCell>>> cells;

  /// Mean over seeds of one fold's accuracy.
  double fold_accuracy(std::size_t mode, std::size_t fold) const;
  /// Mean over folds for one seed.
  double seed_mean_accuracy(std::size_t mode, std::size_t seed) const;
  double seed_mean_gap(std::size_t mode, std::size_t seed) const;
  double mean_accuracy(std::size_t mode) const;
  double median_mean_accuracy(std::size_t mode) const;
  double median_gap(std::size_t mode) const;
};

/// Every mode trained on every (seed, fold) cell from identical initial weights.
AblationTable run_ablation(const std::vector<Sample>& data, const ModelConfig& model_config,
                           const TrainConfig& config_template, std::size_t folds, std::span<const std::uint64_t> seeds);

/// Aligned text table: one row per mode, columns Cross0..Cross{k-1} and Mean, in percent.
std::string format_table(const AblationTable& table);

double median(std::vector<double> values);

}  // namespace ordgrid
