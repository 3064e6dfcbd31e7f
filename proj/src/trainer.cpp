#include "ordgrid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ordgrid/data.hpp"

namespace ordgrid {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::neuron: return "neuron";
    case TrainMode::neuron_grid: return "neuron+grid";
    case TrainMode::neuron_grid_masking: return "neuron+grid+masking";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "neuron") return TrainMode::neuron;
  if (name == "neuron+grid") return TrainMode::neuron_grid;
  if (name == "neuron+grid+masking") return TrainMode::neuron_grid_masking;
  throw std::invalid_argument("unknown mode '" + name + "' (expected neuron, neuron+grid or neuron+grid+masking)");
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("base_lr must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("decay_factor must lie in (0, 1]");
  if (decay_every == 0) throw std::invalid_argument("decay_every must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (weights.alpha < 0.0 || weights.beta < 0.0) throw std::invalid_argument("loss weights must be non-negative");
  grid.validate();
}

double lr_at(const TrainConfig& config, std::size_t step) {
  return config.base_lr * std::pow(config.decay_factor, static_cast<double>(step / config.decay_every));
}

LossBreakdown train_step(Model& model, std::span<const Sample> batch, const TrainConfig& config, std::size_t step,
                         Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (config.use_regression && !model.config().regression_head)
    throw std::invalid_argument("train_step: regression loss requested but the model has no regression head");
  const bool mask_term = uses_mask_loss(config.mode);

  std::vector<ad::Var> cla, reg, mask;
  for (const auto& s : batch) {
    auto rec = model.forward(s.image, Mode::train, &rng);
    cla.push_back(softmax_cross_entropy(rec.class_logits, s.label));
    if (config.use_regression) reg.push_back(euclidean_loss(*rec.regression_out, static_cast<double>(s.label)));
    if (mask_term) {
      if (!s.mask_label) throw std::invalid_argument("train_step: masking mode needs masked samples (" + s.id + ")");
      mask.push_back(sigmoid_cross_entropy(rec.mask_logits, *s.mask_label));
    }
  }
  std::optional<ad::Var> l_reg, l_mask;
  if (!reg.empty()) l_reg = ad::mean(reg);
  if (!mask.empty()) l_mask = ad::mean(mask);
  auto loss = total_loss(ad::mean(cla), l_reg, l_mask, config.weights);

  if (!std::isfinite(loss.breakdown.total))
    throw NumericalAbort(step, "non-finite loss at step " + std::to_string(step));
  model.zero_grad();
  ad::backward(loss.total);
  model.sgd_step(lr_at(config, step));
  return loss.breakdown;
}

double accuracy_from_logits(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels) {
  if (logits.empty()) throw std::invalid_argument("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& row = logits[i];
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.size());
}

EvalResult evaluate(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
  std::vector<std::vector<double>> logits;
  std::vector<std::size_t> labels;
  double loss = 0.0;
  for (const auto& s : samples) {
    auto rec = model.forward(s.image, Mode::eval);
    loss += softmax_cross_entropy(rec.class_logits, s.label)->value()[0];
    logits.push_back(rec.class_logits->value().values());
    labels.push_back(s.label);
  }
  return {loss / static_cast<double>(samples.size()), accuracy_from_logits(logits, labels)};
}

FoldResult train_fold(Model& model, const std::vector<Sample>& train, const std::vector<Sample>& test,
                      const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train.empty() || test.empty()) throw std::invalid_argument("train_fold: empty train or test set");
  model.freeze_prefix(config.freeze_layers);

  FoldResult result;
  auto record = [&](std::size_t step) {
    const auto tr = evaluate(model, train);
    const auto te = evaluate(model, test);
    result.records.push_back({step, tr.mean_loss, te.mean_loss, te.accuracy});
  };

  std::size_t step = 0;
  std::vector<std::size_t> order(train.size());
  std::vector<Sample> batch;
  const bool capped = config.max_steps > 0;
  for (std::size_t epoch = 0; epoch < config.epochs && !(capped && step >= config.max_steps); ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_stream(config.seed, Stream::shuffle, epoch, 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      if (capped && step >= config.max_steps) break;
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        if (uses_grid(config.mode))
          batch.push_back(augment_sample(train[idx], config.grid, config.seed, epoch, idx));
        else
          batch.push_back(train[idx]);
        if (hooks.on_train_sample) hooks.on_train_sample(batch.back());
      }
      Rng dropout_rng = derive_stream(config.seed, Stream::dropout, step, 0);
      const auto breakdown = train_step(model, batch, config, step, dropout_rng);
      if (hooks.on_step) hooks.on_step(step, breakdown, lr_at(config, step));
      ++step;
      if (config.eval_every > 0 && step % config.eval_every == 0) record(step);
    }
  }
  if (result.records.empty() || result.records.back().step != step) record(step);
  result.steps = step;
  const auto& last = result.records.back();
  result.final_accuracy = last.test_accuracy;
  result.final_train_loss = last.train_loss;
  result.final_test_loss = last.test_loss;
  return result;
}

std::uint64_t init_seed(std::uint64_t seed, std::size_t fold) { return mix64(seed * 1000003ULL + fold); }

RunReport run_cross_validation(const std::vector<Sample>& data, const ModelConfig& model_config,
                               const TrainConfig& config, std::size_t folds, const TrainHooks& hooks,
                               const std::function<void(std::size_t, const Model&)>& on_fold_model) {
  const auto split = kfold(data, folds, config.seed);
  RunReport report;
  report.mode = config.mode;
  double acc = 0.0;
  for (std::size_t f = 0; f < folds; ++f) {
    const auto test = gather(data, split[f]);
    const auto tr_idx = train_indices(split, f);
    const auto train = gather(data, tr_idx);
    Model model(model_config, init_seed(config.seed, f));
    report.folds.push_back(train_fold(model, train, test, config, hooks));
    acc += report.folds.back().final_accuracy;
    if (on_fold_model) on_fold_model(f, model);
  }
  report.mean_accuracy = acc / static_cast<double>(folds);
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double AblationTable::fold_accuracy(std::size_t mode, std::size_t fold) const {
  double s = 0.0;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += cells[mode][i][fold].accuracy;
  return s / static_cast<double>(seeds.size());
}

double AblationTable::seed_mean_accuracy(std::size_t mode, std::size_t seed) const {
  double s = 0.0;
  for (std::size_t f = 0; f < folds; ++f) s += cells[mode][seed][f].accuracy;
  return s / static_cast<double>(folds);
}

double AblationTable::seed_mean_gap(std::size_t mode, std::size_t seed) const {
  double s = 0.0;
  for (std::size_t f = 0; f < folds; ++f) s += cells[mode][seed][f].gap;
  return s / static_cast<double>(folds);
}

double AblationTable::mean_accuracy(std::size_t mode) const {
  double s = 0.0;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += seed_mean_accuracy(mode, i);
  return s / static_cast<double>(seeds.size());
}

double AblationTable::median_mean_accuracy(std::size_t mode) const {
  std::vector<double> v;
  for (std::size_t i = 0; i < seeds.size(); ++i) v.push_back(seed_mean_accuracy(mode, i));
  return median(std::move(v));
}

double AblationTable::median_gap(std::size_t mode) const {
  std::vector<double> v;
  for (std::size_t i = 0; i < seeds.size(); ++i) v.push_back(seed_mean_gap(mode, i));
  return median(std::move(v));
}

AblationTable run_ablation(const std::vector<Sample>& data, const ModelConfig& model_config,
                           const TrainConfig& config_template, std::size_t folds, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: at least one seed is required");
  AblationTable table;
  table.modes = {TrainMode::neuron, TrainMode::neuron_grid, TrainMode::neuron_grid_masking};
  table.seeds.assign(seeds.begin(), seeds.end());
  table.folds = folds;
  table.cells.assign(table.modes.size(),
                     std::vector<std::vector<AblationCell>>(seeds.size(), std::vector<AblationCell>(folds)));

  // Fold assignment depends only on the seed, so all modes see the same splits.
  std::vector<std::vector<std::vector<std::size_t>>> splits;
  for (auto seed : seeds) splits.push_back(kfold(data, folds, seed));

  const auto n_cells = static_cast<std::int64_t>(table.modes.size() * seeds.size() * folds);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t cell = 0; cell < n_cells; ++cell) {
    const auto c = static_cast<std::size_t>(cell);
    const std::size_t f = c % folds;
    const std::size_t si = (c / folds) % seeds.size();
    const std::size_t m = c / (folds * seeds.size());
    TrainConfig cfg = config_template;
    cfg.mode = table.modes[m];
    cfg.seed = seeds[si];
    const auto test = gather(data, splits[si][f]);
    const auto train = gather(data, train_indices(splits[si], f));
    Model model(model_config, init_seed(cfg.seed, f));
    const auto r = train_fold(model, train, test, cfg);
    table.cells[m][si][f] = {r.final_accuracy, r.generalization_gap()};
  }
  return table;
}

std::string format_table(const AblationTable& table) {
  std::ostringstream os;
  const int name_w = 26;
  os << std::left << std::setw(name_w) << "models";
  for (std::size_t f = 0; f < table.folds; ++f) os << std::right << std::setw(9) << ("Cross" + std::to_string(f));
  os << std::right << std::setw(9) << "Mean" << '\n';
  for (std::size_t m = 0; m < table.modes.size(); ++m) {
    os << std::left << std::setw(name_w) << (to_string(table.modes[m]) + " (%)");
    os << std::fixed << std::setprecision(2);
    for (std::size_t f = 0; f < table.folds; ++f) os << std::right << std::setw(9) << 100.0 * table.fold_accuracy(m, f);
    os << std::right << std::setw(9) << 100.0 * table.mean_accuracy(m) << '\n';
  }
  return os.str();
}

}  // namespace ordgrid
