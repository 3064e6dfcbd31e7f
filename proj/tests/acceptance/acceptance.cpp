// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ordgrid/cam.hpp"
#include "ordgrid/checkpoint.hpp"
#include "ordgrid/data.hpp"
#include "ordgrid/gradcheck.hpp"
#include "ordgrid/grid.hpp"
#include "ordgrid/losses.hpp"
#include "ordgrid/trainer.hpp"

using namespace ordgrid;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr std::size_t kGradProbes = 100;
constexpr double kGradSeconds = 30.0;
constexpr double kCamTolerance = 1e-8;
constexpr double kExactTolerance = 1e-12;
constexpr double kSmokeAccuracy = 0.85;
constexpr std::size_t kSmokeSteps = 3000;
constexpr double kSmokeSeconds = 300.0;
constexpr double kTieMargin = 0.005;
constexpr std::size_t kAblationSeeds = 5;
constexpr double kAblationSeconds = 45.0 * 60.0;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({1, h, w});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  GradcheckSuiteOptions opt;
  opt.probes = kGradProbes;
  opt.step = kGradStep;
  opt.tolerance = kGradTolerance;
  const auto entries = run_gradcheck_suite(opt);
  const double secs = seconds_since(t0);
  bool ok = secs < kGradSeconds;
  double worst = 0.0;
  std::size_t fewest = SIZE_MAX;
  std::string failed;
  bool composite = false;
  for (const auto& e : entries) {
    worst = std::max(worst, e.max_rel_error);
    fewest = std::min(fewest, e.probes);
    composite = composite || e.op == "composite_loss";
    if (!e.passed || e.probes < kGradProbes) {
      ok = false;
      failed += " " + e.op;
    }
  }
  ok = ok && composite;
  return {ok, fmt("%zu ops, max rel err %.2e, min probes %zu, %.2f s%s", entries.size(), worst, fewest, secs,
                  failed.empty() ? "" : (" failing:" + failed).c_str())};
}

ModelConfig gap_model() {
  ModelConfig c;
  c.head_kind = HeadKind::gap_linear;
  return c;
}

Outcome gap_cam_identity() {
  const Model m(gap_model(), 21);
  const auto& W = m.parameter("head.class.weight").node->value();
  const std::size_t K = m.config().feature_channels();
  double worst = 0.0;
  for (std::uint64_t img = 0; img < 3; ++img) {
    const auto image = random_image(48, 48, 100 + img);
    for (std::size_t c = 0; c < m.config().num_classes; ++c) {
      const auto w = channel_weights(m.forward(image, Mode::eval), c);
      for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, std::abs(w[k] - W[c * K + k]));
    }
  }
  return {worst <= kCamTolerance, fmt("max |w_kc - W_ck| = %.2e over 3 images x 8 classes", worst)};
}

Outcome dropout_zeroing() {
  const Model m(gap_model(), 22);
  const double r = m.config().neuron_dropout_rate;
  const std::size_t K = m.config().feature_channels();
  std::vector<std::uint8_t> keep(K, 1);
  for (std::size_t k = 0; k < K; k += 3) keep[k] = 0;
  bool ok = true;
  double worst = 0.0;
  for (std::size_t c = 0; c < m.config().num_classes; ++c) {
    const auto res = dropout_zeroing_demo(m, random_image(48, 48, 200 + c), c, keep);
    for (std::size_t k = 0; k < K; ++k) {
      if (!keep[k]) {
        ok = ok && res.weights_train[k] == 0.0;
      } else {
        const double err = std::abs(res.weights_train[k] - res.weights_eval[k] / (1.0 - r));
        worst = std::max(worst, err);
      }
    }
  }
  ok = ok && worst <= 1e-10;
  return {ok, fmt("dropped weights exactly 0: %s, kept max |w_train - w_eval/(1-r)| = %.2e", ok ? "yes" : "no", worst)};
}

Outcome mask_machinery() {
  std::vector<std::string> bad;
  const std::vector<std::size_t> dropped{1, 3};
  if (mask_from_dropped(3, dropped).bits != std::vector<std::uint8_t>{1, 0, 1, 0, 1, 1, 1, 1, 1})
    bad.push_back("mask_from_dropped");

  Rng rng(31);
  for (std::size_t s = 1; s <= 7; ++s)
    for (double p : {0.0, 0.2, 0.25, 0.5, 1.0}) {
      const GridSpec spec{s, p, 0.0};
      for (int t = 0; t < 200; ++t)
        if (sample_mask(spec, rng).zeros() != spec.k()) {
          bad.push_back(fmt("k zeros s=%zu p=%.2f", s, p));
          t = 200;
        }
    }

  const int n = 10000;
  std::map<std::vector<std::uint8_t>, int> counts;
  for (int i = 0; i < n; ++i) ++counts[sample_mask(GridSpec{2, 0.25, 0.0}, rng).bits];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  double worst_z = 0.0;
  for (const auto& [bits, c] : counts) worst_z = std::max(worst_z, std::abs(c - n * 0.25) / sigma);
  if (counts.size() != 4 || worst_z > 3.0) bad.push_back("uniformity");

  // Pascal triangle row 25.
  std::vector<std::uint64_t> row{1};
  for (int i = 1; i <= 25; ++i) {
    std::vector<std::uint64_t> next(row.size() + 1, 1);
    for (std::size_t j = 1; j < row.size(); ++j) next[j] = row[j - 1] + row[j];
    row = next;
  }
  const auto mult = multiplicity(5, 0.25);
  if (mult != 177100 || mult != row[6]) bad.push_back("multiplicity");

  std::string joined;
  for (const auto& b : bad) joined += " " + b;
  return {bad.empty(), fmt("2x2 uniformity max |z| = %.2f, multiplicity(5,0.25) = %llu%s", worst_z,
                           static_cast<unsigned long long>(mult), joined.empty() ? "" : (" failing:" + joined).c_str())};
}

Outcome exact_values() {
  const TrainConfig t;
  const double lr0 = lr_at(t, 0), lr1 = lr_at(t, 4999), lr2 = lr_at(t, 10000);
  auto scalar = [](double v) { return ad::constant(Tensor::scalar(v)); };
  const LossWeights w{0.5, 0.5};
  const double two = total_loss(scalar(1.0), std::nullopt, scalar(0.4), w).breakdown.total;
  const double three = total_loss(scalar(1.0), scalar(0.6), scalar(0.4), w).breakdown.total;
  const bool ok = std::abs(lr0 - 0.001) <= kExactTolerance && std::abs(lr1 - 0.001) <= kExactTolerance &&
                  std::abs(lr2 - 0.00025) <= kExactTolerance && std::abs(two - 1.2) <= kExactTolerance &&
                  std::abs(three - 1.5) <= kExactTolerance;
  return {ok, fmt("lr(0)=%g lr(4999)=%g lr(10000)=%g two-term=%.12g three-term=%.12g", lr0, lr1, lr2, two, three)};
}

// 80 training / 40 test images, low noise, full three-term objective.
struct SmokeSetup {
  std::vector<Sample> train, test;
  TrainConfig config;
};

SmokeSetup smoke_setup() {
  SynthSpec spec;
  spec.noise_sigma = 0.05;
  spec.seed = 1;
  const auto data = generate(spec, 15);
  const auto folds = kfold(data, 3, 0);
  SmokeSetup s;
  s.test = gather(data, folds[0]);
  s.train = gather(data, train_indices(folds, 0));
  s.config.mode = TrainMode::neuron_grid_masking;
  s.config.base_lr = 0.01;
  s.config.batch_size = 8;
  s.config.epochs = 100000;
  s.config.max_steps = kSmokeSteps;
  s.config.eval_every = 250;
  s.config.seed = 1;
  return s;
}

Outcome smoke_training() {
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto s = smoke_setup();
  const auto t0 = Clock::now();
  Model model(ModelConfig{}, init_seed(1, 0));
  const auto r = train_fold(model, s.train, s.test, s.config);
  const double secs = seconds_since(t0);
  std::size_t reached = 0;
  for (const auto& e : r.records)
    if (e.test_accuracy >= kSmokeAccuracy) {
      reached = e.step;
      break;
    }

  // Determinism: two independent short runs must agree bitwise.
  auto short_cfg = s.config;
  short_cfg.max_steps = 200;
  short_cfg.eval_every = 0;
  Model a(ModelConfig{}, init_seed(1, 0)), b(ModelConfig{}, init_seed(1, 0));
  const auto ra = train_fold(a, s.train, s.test, short_cfg);
  const auto rb = train_fold(b, s.train, s.test, short_cfg);
  bool same = ra.final_test_loss == rb.final_test_loss;
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    same = same && a.parameters()[i].node->value() == b.parameters()[i].node->value();
  omp_set_num_threads(threads);

  const bool ok = reached > 0 && secs < kSmokeSeconds && same && s.train.size() == 80 && s.test.size() == 40;
  return {ok, fmt("%zu/%zu split, first step with acc >= %.2f: %zu, final acc %.3f, %.1f s on 1 thread, "
                  "deterministic: %s",
                  s.train.size(), s.test.size(), kSmokeAccuracy, reached, r.final_accuracy, secs,
                  same ? "yes" : "no")};
}

Outcome ablation_ordering() {
  SynthSpec spec;
  spec.noise_sigma = 0.5;
  spec.center_jitter = 3.0;
  spec.seed = 11;
  const auto data = generate(spec, 10);
  ModelConfig mc;
  mc.conv_blocks = {{4, 1}, {8, 1}, {16, 1}};
  TrainConfig tc;
  tc.base_lr = 0.01;
  tc.batch_size = 8;
  tc.epochs = 100000;
  tc.max_steps = 1500;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < kAblationSeeds; ++s) seeds.push_back(s);

  const auto t0 = Clock::now();
  const auto table = run_ablation(data, mc, tc, 5, seeds);
  const double secs = seconds_since(t0);
  std::printf("%s", format_table(table).c_str());

  const double neuron = table.median_mean_accuracy(0), grid = table.median_mean_accuracy(1),
               masking = table.median_mean_accuracy(2);
  const double gap_neuron = table.median_gap(0), gap_grid = table.median_gap(1);
  const bool order = masking + kTieMargin >= grid && grid + kTieMargin >= neuron;
  const bool gap = gap_grid <= gap_neuron;
  const bool ok = order && gap && secs < kAblationSeconds;
  return {ok, fmt("median acc neuron %.4f grid %.4f masking %.4f (ordering %s), median gap neuron %.4f grid %.4f "
                  "(%s), %zu seeds, %.0f s",
                  neuron, grid, masking, order ? "ok" : "violated", gap_neuron, gap_grid, gap ? "ok" : "violated",
                  seeds.size(), secs)};
}

Outcome io_roundtrips() {
  const std::string one = write_pgm(Tensor({1, 1, 1}, 1.0));
  const bool bytes = one == std::string("P5\n1 1\n255\n\xFF", 12);

  const auto image = random_image(48, 48, 300);
  const auto back = read_pgm(write_pgm(image));
  double worst = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) worst = std::max(worst, std::abs(back[i] - image[i]));

  const Model m(ModelConfig{}, 23);
  const auto path = std::filesystem::temp_directory_path() / "ordgrid_acceptance.ordg";
  save_parameters(path, m.parameters());
  Model other(ModelConfig{}, 24);
  load_parameters(path, other.parameters());
  bool bitwise = true;
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    bitwise = bitwise && m.parameters()[i].node->value() == other.parameters()[i].node->value();
  std::filesystem::remove(path);

  const bool ok = bytes && worst <= 1.0 / 510.0 && bitwise;
  return {ok, fmt("1x1 PGM byte-exact: %s, PGM max error %.5f (limit %.5f), checkpoint bitwise: %s",
                  bytes ? "yes" : "no", worst, 1.0 / 510.0, bitwise ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-suite", gradient_suite},     {"gap-cam-identity", gap_cam_identity},
      {"dropout-zeroing", dropout_zeroing},   {"mask-machinery", mask_machinery},
      {"exact-values", exact_values},         {"smoke-training", smoke_training},
      {"ablation-ordering", ablation_ordering}, {"io-roundtrip", io_roundtrips},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
