#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ordgrid/data.hpp"
#include "ordgrid/trainer.hpp"

using namespace ordgrid;

namespace {

SynthSpec tiny_spec() {
  SynthSpec s;
  s.image_size = 16;
  s.base_radius = 1.0;
  s.radius_step = 0.8;
  s.center_jitter = 1.0;
  s.seed = 3;
  return s;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.height = c.width = 16;
  c.conv_blocks = {{4, 1}, {6, 1}};
  c.hidden_dim = 16;
  c.grid_cells = 16;
  return c;
}

TrainConfig tiny_train(TrainMode mode) {
  TrainConfig t;
  t.mode = mode;
  t.base_lr = 0.02;
  t.batch_size = 8;
  t.max_steps = 30;
  t.epochs = 1000;
  t.grid = GridSpec{4, 0.25, 0.0};
  t.seed = 5;
  return t;
}

std::vector<Tensor> snapshot(const Model& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.node->value());
  return out;
}

}  // namespace

TEST(LearningRate, StepDecay) {
  TrainConfig t;
  EXPECT_DOUBLE_EQ(lr_at(t, 0), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(t, 4999), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(t, 5000), 0.0005);
  EXPECT_DOUBLE_EQ(lr_at(t, 10000), 0.00025);
  for (std::size_t k = 1; k < 6; ++k) EXPECT_DOUBLE_EQ(lr_at(t, k * 5000) * 2.0, lr_at(t, k * 5000 - 1));
}

TEST(Modes, NamesRoundTrip) {
  for (auto m : {TrainMode::neuron, TrainMode::neuron_grid, TrainMode::neuron_grid_masking})
    EXPECT_EQ(parse_train_mode(to_string(m)), m);
  EXPECT_THROW(parse_train_mode("grid"), std::invalid_argument);
}

TEST(Accuracy, FromLogits) {
  const std::vector<std::vector<double>> logits{{0, 1, 0}, {2, 1, 0}, {0, 0, 3}};
  const std::vector<std::size_t> right{1, 0, 2}, wrong{0, 1, 1};
  EXPECT_EQ(accuracy_from_logits(logits, right), 1.0);
  EXPECT_EQ(accuracy_from_logits(logits, wrong), 0.0);

  std::vector<std::vector<double>> eight;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 8; ++i) {
    eight.push_back(std::vector<double>(8, 0.0));
    eight.back()[i] = 1.0;
    labels.push_back(i < 3 ? i : (i + 1) % 8);
  }
  EXPECT_DOUBLE_EQ(accuracy_from_logits(eight, labels), 0.375);
}

TEST(Accuracy, TiesGoToFirstMaximum) {
  const std::vector<std::vector<double>> logits{{1, 1, 0}};
  const std::vector<std::size_t> first{0}, second{1};
  EXPECT_EQ(accuracy_from_logits(logits, first), 1.0);
  EXPECT_EQ(accuracy_from_logits(logits, second), 0.0);
}

TEST(TrainStep, OverfitsOneBatch) {
  const auto data = generate(tiny_spec(), 1);
  auto cfg = tiny_model();
  cfg.neuron_dropout_rate = 0.0;
  Model m(cfg, 1);
  TrainConfig t = tiny_train(TrainMode::neuron);
  t.base_lr = 0.05;
  Rng rng(1);
  std::size_t step = 0;
  for (; step < 500; ++step) {
    train_step(m, data, t, step, rng);
    if (evaluate(m, data).mean_loss < 0.05) break;
  }
  EXPECT_LT(step, 500u);
  EXPECT_LT(evaluate(m, data).mean_loss, 0.05);
}

TEST(TrainStep, MaskingNeedsMaskedSamples) {
  const auto data = generate(tiny_spec(), 1);
  Model m(tiny_model(), 1);
  Rng rng(1);
  EXPECT_THROW(train_step(m, data, tiny_train(TrainMode::neuron_grid_masking), 0, rng), std::invalid_argument);
}

TEST(TrainFold, DeterministicAndLossTermsPerMode) {
  const auto data = generate(tiny_spec(), 3);
  const auto folds = kfold(data, 3, 0);
  const auto train = gather(data, train_indices(folds, 0)), test = gather(data, folds[0]);
  for (auto mode : {TrainMode::neuron, TrainMode::neuron_grid, TrainMode::neuron_grid_masking}) {
    std::vector<LossBreakdown> logs;
    TrainHooks hooks;
    hooks.on_step = [&](std::size_t, const LossBreakdown& b, double) { logs.push_back(b); };
    Model a(tiny_model(), 2), b(tiny_model(), 2);
    const auto ra = train_fold(a, train, test, tiny_train(mode), hooks);
    const auto rb = train_fold(b, train, test, tiny_train(mode));
    EXPECT_EQ(snapshot(a), snapshot(b)) << to_string(mode);
    EXPECT_EQ(ra.final_test_loss, rb.final_test_loss);
    EXPECT_EQ(ra.steps, 30u);
    ASSERT_EQ(logs.size(), 30u);
    for (const auto& l : logs) {
      EXPECT_EQ(l.l_mask.has_value(), mode == TrainMode::neuron_grid_masking);
      EXPECT_FALSE(l.l_reg);
    }
  }
}

TEST(TrainFold, ZeroEpochsIdenticalAcrossModes) {
  const auto data = generate(tiny_spec(), 4);
  const auto folds = kfold(data, 2, 0);
  const auto train = gather(data, train_indices(folds, 0)), test = gather(data, folds[0]);
  std::vector<double> acc;
  for (auto mode : {TrainMode::neuron, TrainMode::neuron_grid, TrainMode::neuron_grid_masking}) {
    auto t = tiny_train(mode);
    t.epochs = 0;
    t.max_steps = 0;
    Model m(tiny_model(), 4);
    const auto r = train_fold(m, train, test, t);
    EXPECT_EQ(r.steps, 0u);
    acc.push_back(r.final_accuracy);
  }
  EXPECT_EQ(acc[0], acc[1]);
  EXPECT_EQ(acc[1], acc[2]);
  EXPECT_NEAR(acc[0], 0.125, 0.15);
}

TEST(TrainFold, FrozenLayersUnchanged) {
  const auto data = generate(tiny_spec(), 2);
  auto t = tiny_train(TrainMode::neuron_grid_masking);
  t.freeze_layers = 1;
  t.max_steps = 5;
  Model m(tiny_model(), 3);
  const auto before = m.parameter("block0.conv0.weight").node->value();
  const auto head_before = m.parameter("head.class.weight").node->value();
  train_fold(m, data, data, t);
  EXPECT_EQ(m.parameter("block0.conv0.weight").node->value(), before);
  EXPECT_NE(m.parameter("head.class.weight").node->value(), head_before);
}

TEST(TrainFold, GridHookSeesFillInDroppedCells) {
  const auto data = generate(tiny_spec(), 2);
  auto t = tiny_train(TrainMode::neuron_grid);
  t.grid.fill_value = 0.375;
  t.max_steps = 4;
  const auto geom = partition(16, 16, 4);
  std::size_t seen = 0;
  TrainHooks hooks;
  hooks.on_train_sample = [&](const Sample& s) {
    ASSERT_TRUE(s.mask_label);
    EXPECT_EQ(s.mask_label->zeros(), 4u);
    for (std::size_t cell = 0; cell < 16; ++cell) {
      if (s.mask_label->bits[cell]) continue;
      for (std::size_t y = geom.row_bounds[cell / 4]; y < geom.row_bounds[cell / 4 + 1]; ++y)
        for (std::size_t x = geom.col_bounds[cell % 4]; x < geom.col_bounds[cell % 4 + 1]; ++x)
          EXPECT_EQ(s.image.at(0, y, x), 0.375);
    }
    ++seen;
  };
  Model m(tiny_model(), 3);
  train_fold(m, data, data, t, hooks);
  EXPECT_EQ(seen, 4u * 8u);
}

TEST(TrainFold, EvalEveryRecords) {
  const auto data = generate(tiny_spec(), 2);
  auto t = tiny_train(TrainMode::neuron);
  t.max_steps = 10;
  t.eval_every = 4;
  Model m(tiny_model(), 3);
  const auto r = train_fold(m, data, data, t);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].step, 4u);
  EXPECT_EQ(r.records[2].step, 10u);
}

TEST(Ablation, TableShape) {
  const auto data = generate(tiny_spec(), 3);
  auto t = tiny_train(TrainMode::neuron);
  t.max_steps = 2;
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto table = run_ablation(data, tiny_model(), t, 3, seeds);
  ASSERT_EQ(table.cells.size(), 3u);
  const auto text = format_table(table);
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);  // header + 3 modes
  EXPECT_NE(lines[0].find("Cross0"), std::string::npos);
  EXPECT_NE(lines[0].find("Cross2"), std::string::npos);
  EXPECT_NE(lines[0].find("Mean"), std::string::npos);
  for (std::size_t i = 1; i < 4; ++i) {
    std::istringstream row(lines[i].substr(lines[i].find(')') + 1));
    int cols = 0;
    double v;
    while (row >> v) ++cols;
    EXPECT_EQ(cols, 4) << lines[i];
  }
  EXPECT_NE(lines[3].find("neuron+grid+masking (%)"), std::string::npos);
}

TEST(Ablation, SharedInitialisationAcrossModes) {
  const auto data = generate(tiny_spec(), 3);
  auto t = tiny_train(TrainMode::neuron);
  t.max_steps = 0;
  t.epochs = 0;
  const std::vector<std::uint64_t> seeds{4};
  const auto table = run_ablation(data, tiny_model(), t, 3, seeds);
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(table.cells[0][0][f].accuracy, table.cells[1][0][f].accuracy);
    EXPECT_EQ(table.cells[0][0][f].gap, table.cells[2][0][f].gap);
  }
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}
