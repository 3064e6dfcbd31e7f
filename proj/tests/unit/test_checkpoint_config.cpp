#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "ordgrid/checkpoint.hpp"
#include "ordgrid/config.hpp"

using namespace ordgrid;
namespace fs = std::filesystem;

TEST(Checkpoint, EncodeLayout) {
  const std::map<std::string, Tensor> m{{"b", Tensor::vector({1.0})}, {"a", Tensor({1, 2}, {0.5, -2.0})}};
  const auto bytes = encode_checkpoint(m);
  const std::string head = "ORDG1\na\n1 2\n";
  ASSERT_EQ(bytes.substr(0, head.size()), head);
  double v;
  std::memcpy(&v, bytes.data() + head.size(), 8);
  EXPECT_EQ(v, 0.5);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back, m);
}

TEST(Checkpoint, RejectsCorruption) {
  const auto bytes = encode_checkpoint({{"w", Tensor({3}, 1.0)}});
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
}

TEST(Checkpoint, ModelRoundTripBitwise) {
  const auto path = fs::temp_directory_path() / "ordgrid_test_ckpt.ordg";
  ModelConfig c;
  c.height = c.width = 16;
  c.conv_blocks = {{3, 1}};
  Model a(c, 1), b(c, 2);
  a.parameters()[0].node->mutable_value()[0] = 1.0 / 3.0;
  save_parameters(path, a.parameters());
  load_parameters(path, b.parameters());
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    EXPECT_EQ(a.parameters()[i].node->value(), b.parameters()[i].node->value());

  ModelConfig other = c;
  other.hidden_dim = 7;
  Model d(other, 3);
  EXPECT_THROW(load_parameters(path, d.parameters()), CheckpointError);
  fs::remove(path);
}

TEST(Config, ModelJsonRoundTrip) {
  ModelConfig c;
  c.conv_blocks = {{5, 2}, {7, 1}};
  c.head_kind = HeadKind::gap_linear;
  c.regression_head = true;
  nlohmann::json j = c;
  EXPECT_EQ(j["head_kind"], "gap-linear");
  EXPECT_EQ(j.get<ModelConfig>(), c);
}

TEST(Config, TrainJsonRoundTrip) {
  TrainConfig t;
  t.mode = TrainMode::neuron_grid;
  t.grid.s = 3;
  t.weights.beta = 0.25;
  const nlohmann::json j = t;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(back.mode, TrainMode::neuron_grid);
  EXPECT_EQ(back.grid.s, 3u);
  EXPECT_EQ(back.weights.beta, 0.25);
}

TEST(Config, Overrides) {
  nlohmann::json doc = {{"seed", 0}, {"train", {{"base_lr", 0.001}, {"grid", {{"s", 5}}}}}, {"model", {{"hidden_dim", 64}}}};
  apply_override(doc, "base_lr=0.002");
  EXPECT_EQ(doc["train"]["base_lr"], 0.002);
  apply_override(doc, "train.grid.s=3");
  EXPECT_EQ(doc["train"]["grid"]["s"], 3);
  apply_override(doc, "seed=9");
  EXPECT_EQ(doc["seed"], 9);
  apply_override(doc, "s=4");
  EXPECT_EQ(doc["train"]["grid"]["s"], 4);
  EXPECT_THROW(apply_override(doc, "nonsense=1"), std::invalid_argument);
  EXPECT_THROW(apply_override(doc, "noequals"), std::invalid_argument);
}

TEST(Config, LossLogLine) {
  LossBreakdown b;
  b.l_cla = 1.5;
  b.total = 1.5;
  EXPECT_EQ(loss_log_line(3, b, 0.001), R"({"step":3,"l_cla":1.5,"l_reg":null,"l_mask":null,"total":1.5,"lr":0.001})");
}
