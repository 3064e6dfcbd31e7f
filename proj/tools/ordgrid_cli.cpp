// ordgrid: synthetic data, grid-dropout augmentation preview, training,
// evaluation, gradCAM export and gradient checking from one binary.
//
// Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 numerical abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ordgrid/cam.hpp"
#include "ordgrid/checkpoint.hpp"
#include "ordgrid/config.hpp"
#include "ordgrid/data.hpp"
#include "ordgrid/gradcheck.hpp"
#include "ordgrid/grid.hpp"
#include "ordgrid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ordgrid;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json strip_seed(json j) {
  j.erase("seed");
  return j;
}

json default_doc() {
  json doc;
  doc["seed"] = 0;
  doc["data"] = "";
  doc["count_per_class"] = 15;
  doc["folds"] = 5;
  doc["seeds"] = json::array({0, 1, 2, 3, 4});
  doc["synth"] = strip_seed(json(SynthSpec{}));
  doc["model"] = json(ModelConfig{});
  doc["train"] = strip_seed(json(TrainConfig{}));
  return doc;
}

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::string mode;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out", o.out_dir, "Output directory (falls back to $OUTPUT_DIR)");
  cmd->add_option("--override", o.overrides, "key=value config override (repeatable)");
  cmd->add_option("--mode", o.mode, "neuron | neuron+grid | neuron+grid+masking");
  cmd->add_option("--seed", o.seed, "Seed for every random stream");
}

json load_doc(const CommonOptions& o) {
  json doc = default_doc();
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    if (!f) throw UsageError("cannot read config " + o.config_path);
    json user;
    try {
      user = json::parse(f);
    } catch (const json::exception& e) {
      throw UsageError("invalid JSON in " + o.config_path + ": " + e.what());
    }
    doc.merge_patch(user);
  }
  for (const auto& kv : o.overrides) apply_override(doc, kv);
  if (!o.mode.empty()) doc["train"]["mode"] = o.mode;
  if (o.seed) doc["seed"] = *o.seed;
  return doc;
}

std::uint64_t doc_seed(const json& doc) { return doc.at("seed").get<std::uint64_t>(); }

SynthSpec synth_spec(const json& doc) {
  auto s = doc.at("synth").get<SynthSpec>();
  s.seed = doc_seed(doc);
  return s;
}

TrainConfig train_config(const json& doc) {
  auto t = doc.at("train").get<TrainConfig>();
  t.seed = doc_seed(doc);
  return t;
}

fs::path out_dir(const CommonOptions& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv("OUTPUT_DIR"); env && *env) return env;
  throw UsageError("--out is required (or set OUTPUT_DIR)");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".ordgrid_write_probe";
  std::ofstream f(probe);
  if (!f) throw UsageError("output directory " + dir.string() + " is not writable");
  f.close();
  fs::remove(probe, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write " + path.string());
  f << text;
}

fs::path sidecar_for(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  return p.replace_extension(".json");
}

Model load_model(const fs::path& checkpoint) {
  std::ifstream side(sidecar_for(checkpoint));
  if (!side) throw UsageError("missing model sidecar " + sidecar_for(checkpoint).string());
  const auto cfg = json::parse(side).get<ModelConfig>();
  Model model(cfg, 0);
  load_parameters(checkpoint, model.parameters());
  return model;
}

void save_model(const fs::path& checkpoint, const Model& model) {
  save_parameters(checkpoint, model.parameters());
  write_text(sidecar_for(checkpoint), json(model.config()).dump(2) + "\n");
}

std::vector<Sample> load_data(const json& doc, const std::string& flag) {
  std::string dir = flag.empty() ? doc.value("data", std::string()) : flag;
  if (dir.empty()) throw UsageError("no dataset given (--data or config key \"data\")");
  if (!fs::exists(fs::path(dir) / "manifest.jsonl")) throw UsageError("dataset " + dir + " has no manifest.jsonl");
  return read_dataset(dir);
}

// --- subcommands ---------------------------------------------------------

int cmd_synth(const CommonOptions& o) {
  const json doc = load_doc(o);
  const auto spec = synth_spec(doc);
  const auto n = doc.at("count_per_class").get<std::size_t>();
  const fs::path dir = out_dir(o);
  ensure_dir(dir);
  const auto samples = generate(spec, n);
  write_dataset(dir, samples);
  std::map<std::size_t, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.label];
  for (const auto& [label, count] : counts) std::cout << "class " << label << ": " << count << "\n";
  std::cout << "wrote " << samples.size() << " samples to " << dir.string() << "\n";
  return kOk;
}

int cmd_augment(const CommonOptions& o, const std::string& data_dir, const std::vector<std::string>& inputs) {
  const json doc = load_doc(o);
  const auto cfg = train_config(doc);
  cfg.grid.validate();
  const fs::path dir = out_dir(o);
  ensure_dir(dir / "masked");

  std::vector<std::pair<std::string, Tensor>> images;
  for (const auto& path : inputs) images.emplace_back(path, read_pgm_file(path));
  if (!data_dir.empty()) {
    std::ifstream manifest(fs::path(data_dir) / "manifest.jsonl");
    if (!manifest) throw UsageError("cannot read manifest in " + data_dir);
    std::string line;
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      const auto e = parse_manifest_line(line);
      const auto p = (fs::path(data_dir) / e.path).string();
      images.emplace_back(p, read_pgm_file(p));
    }
  }
  if (images.empty()) throw UsageError("augment needs --input images or --data");

  std::ofstream records(dir / "masks.jsonl", std::ios::trunc);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& [path, img] = images[i];
    Sample s{img, 0, std::nullopt, fs::path(path).stem().string()};
    const auto masked = augment_sample(s, cfg.grid, cfg.seed, 0, i);
    write_pgm_file(dir / "masked" / (s.id + ".pgm"), masked.image);
    json bits = json::array();
    for (auto b : masked.mask_label->bits) bits.push_back(static_cast<int>(b));
    nlohmann::ordered_json rec;
    rec["source"] = path;
    rec["mask"] = bits;
    rec["k"] = cfg.grid.k();
    rec["s"] = cfg.grid.s;
    records << rec.dump() << "\n";
  }
  std::cout << "masked " << images.size() << " images, " << cfg.grid.k() << " of " << cfg.grid.cells()
            << " cells dropped each\n";
  return kOk;
}

int cmd_train(const CommonOptions& o, const std::string& data_flag, bool ablation) {
  const json doc = load_doc(o);
  auto mcfg = doc.at("model").get<ModelConfig>();
  auto tcfg = train_config(doc);
  try {
    mcfg.validate();
    tcfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("bad config: ") + e.what());
  }
  const auto folds = doc.at("folds").get<std::size_t>();
  const auto data = load_data(doc, data_flag);
  const fs::path dir = out_dir(o);
  ensure_dir(dir);
  write_text(dir / "config.json", doc.dump(2) + "\n");

  if (ablation) {
    const auto seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    const auto table = run_ablation(data, mcfg, tcfg, folds, seeds);
    write_text(dir / "report.json", to_json(table).dump(2) + "\n");
    const auto text = format_table(table);
    write_text(dir / "table.txt", text);
    std::cout << text;
    return kOk;
  }

  std::ofstream log(dir / "losses.jsonl", std::ios::trunc);
  TrainHooks hooks;
  hooks.on_step = [&](std::size_t step, const LossBreakdown& l, double lr) { log << loss_log_line(step, l, lr) << "\n"; };
  ensure_dir(dir / "checkpoints");
  const auto report = run_cross_validation(data, mcfg, tcfg, folds, hooks, [&](std::size_t f, const Model& m) {
    save_model(dir / "checkpoints" / ("fold" + std::to_string(f) + ".ordg"), m);
  });
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  for (std::size_t f = 0; f < report.folds.size(); ++f)
    std::cout << "Cross" << f << ": " << 100.0 * report.folds[f].final_accuracy << "%\n";
  std::cout << "Mean: " << 100.0 * report.mean_accuracy << "%\n";
  return kOk;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint, const std::string& data_flag) {
  const json doc = load_doc(o);
  const auto model = load_model(checkpoint);
  const auto data = load_data(doc, data_flag);
  const auto r = evaluate(model, data);
  const json out{{"accuracy", r.accuracy}, {"mean_loss", r.mean_loss}, {"count", data.size()}};
  std::cout << out.dump() << "\n";
  if (!o.out_dir.empty()) {
    ensure_dir(o.out_dir);
    write_text(fs::path(o.out_dir) / "eval.json", out.dump(2) + "\n");
  }
  return kOk;
}

int cmd_cam(const CommonOptions& o, const std::string& checkpoint, const std::string& image_path,
            std::optional<std::size_t> cls, bool relu) {
  auto model = load_model(checkpoint);
  const Tensor image = read_pgm_file(image_path);
  const auto rec = model.forward(image, Mode::eval);
  const auto& logits = rec.class_logits->value();
  std::size_t c = 0;
  if (cls) {
    if (*cls >= logits.size())
      throw UsageError("class " + std::to_string(*cls) + " out of range (model has " + std::to_string(logits.size()) +
                       " classes)");
    c = *cls;
  } else {
    c = static_cast<std::size_t>(std::max_element(logits.data().begin(), logits.data().end()) - logits.data().begin());
  }
  const auto cam = compute_cam(rec, c, std::make_pair(image.dim(1), image.dim(2)), relu);
  const fs::path dir = out_dir(o);
  ensure_dir(dir);
  write_pgm_file(dir / "heatmap.pgm", cam.display_map->reshaped({1, image.dim(1), image.dim(2)}));
  nlohmann::ordered_json side;
  side["class"] = c;
  side["weights"] = cam.channel_weights;
  side["l"] = cam.raw_map.dim(0);
  write_text(dir / "weights.json", side.dump() + "\n");
  std::cout << "class " << c << ", map " << cam.raw_map.dim(0) << "x" << cam.raw_map.dim(1) << "\n";
  return kOk;
}

int cmd_gradcheck(const std::vector<std::string>& faults) {
  for (const auto& f : faults) ad::fault::inject(f);
  const auto entries = run_gradcheck_suite();
  bool ok = true;
  for (const auto& e : entries) {
    std::printf("%-24s probes=%-5zu max_rel_err=%.3e  %s\n", e.op.c_str(), e.probes, e.max_rel_error,
                e.passed ? "PASS" : "FAIL");
    ok = ok && e.passed;
  }
  if (!ok) {
    for (const auto& e : entries)
      if (!e.passed) std::fprintf(stderr, "gradcheck failed: %s (max relative error %.3e)\n", e.op.c_str(), e.max_rel_error);
    return kCheckFailed;
  }
  return kOk;
}

double parse_ratio(const std::string& text) {
  const auto slash = text.find('/');
  std::size_t used = 0;
  try {
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw UsageError("bad ratio " + text);
      return v;
    }
    const double num = std::stod(text.substr(0, slash), &used);
    const std::string den_s = text.substr(slash + 1);
    std::size_t used2 = 0;
    const double den = std::stod(den_s, &used2);
    if (used != slash || used2 != den_s.size() || den == 0.0) throw UsageError("bad ratio " + text);
    return num / den;
  } catch (const std::logic_error&) {
    throw UsageError("bad ratio " + text);
  }
}

int cmd_multiplicity(std::size_t s, const std::string& p) {
  const double ratio = parse_ratio(p);
  if (s == 0 || ratio < 0.0 || ratio > 1.0) throw UsageError("need s >= 1 and 0 <= p <= 1");
  try {
    std::cout << multiplicity(s, ratio) << "\n";
  } catch (const MultiplicityOverflow& e) {
    std::cerr << e.what() << "\n";
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-dropout ordinal classification toolkit"};
  app.require_subcommand(1);

  CommonOptions synth_o, augment_o, train_o, eval_o, cam_o, grad_o, mult_o;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic ordinal dataset");
  add_common(synth, synth_o);

  std::string augment_data;
  std::vector<std::string> augment_inputs;
  auto* augment = app.add_subcommand("augment", "Write grid-dropout masked images and their masking labels");
  add_common(augment, augment_o);
  augment->add_option("--data", augment_data, "Dataset directory to augment");
  augment->add_option("--input", augment_inputs, "PGM image(s) to augment");

  std::string train_data;
  bool ablation = false;
  auto* train = app.add_subcommand("train", "Cross-validated training");
  add_common(train, train_o);
  train->add_option("--data", train_data, "Dataset directory (overrides config \"data\")");
  train->add_flag("--ablation", ablation, "Train all three modes and write the comparison table");

  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint (.ordg with .json sidecar)")->required();
  eval->add_option("--data", eval_data, "Dataset directory");

  std::string cam_ckpt, cam_image;
  std::optional<std::size_t> cam_class;
  bool cam_relu = false;
  auto* cam = app.add_subcommand("cam", "Export a gradCAM heatmap");
  add_common(cam, cam_o);
  cam->add_option("--checkpoint", cam_ckpt, "Checkpoint (.ordg with .json sidecar)")->required();
  cam->add_option("--image", cam_image, "Input PGM image")->required();
  cam->add_option("--class", cam_class, "Class index (default: predicted class)");
  cam->add_flag("--relu", cam_relu, "Apply ReLU to the map before rendering");

  std::vector<std::string> faults;
  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  add_common(grad, grad_o);
  grad->add_option("--inject-fault", faults, "Corrupt the backward pass of an op (testing)")->group("");

  std::size_t mult_s = 5;
  std::string mult_p = "0.25";
  auto* mult = app.add_subcommand("multiplicity", "Count distinct grid masks per image");
  add_common(mult, mult_o);
  mult->add_option("--s", mult_s, "Grid cells per side");
  mult->add_option("--p", mult_p, "Drop ratio, decimal or fraction like 2/9");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_o);
    if (*augment) return cmd_augment(augment_o, augment_data, augment_inputs);
    if (*train) return cmd_train(train_o, train_data, ablation);
    if (*eval) return cmd_eval(eval_o, eval_ckpt, eval_data);
    if (*cam) return cmd_cam(cam_o, cam_ckpt, cam_image, cam_class, cam_relu);
    if (*grad) return cmd_gradcheck(faults);
    if (*mult) return cmd_multiplicity(mult_s, mult_p);
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort at step " << e.step() << ": " << e.what() << "\n";
    return kNumerical;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
