#include "ordgrid/config.hpp"

#include <functional>
#include <stdexcept>

namespace ordgrid {

using nlohmann::json;

namespace {

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

std::string head_name(HeadKind k) { return k == HeadKind::gap_linear ? "gap-linear" : "flatten-dense"; }

HeadKind parse_head(const std::string& s) {
  if (s == "gap-linear") return HeadKind::gap_linear;
  if (s == "flatten-dense") return HeadKind::flatten_dense;
  throw std::invalid_argument("unknown head_kind '" + s + "'");
}

}  // namespace

void to_json(json& j, const GridSpec& g) { j = json{{"s", g.s}, {"p", g.p}, {"fill_value", g.fill_value}}; }

void from_json(const json& j, GridSpec& g) {
  get_opt(j, "s", g.s);
  get_opt(j, "p", g.p);
  get_opt(j, "fill_value", g.fill_value);
}

void to_json(json& j, const LossWeights& w) { j = json{{"alpha", w.alpha}, {"beta", w.beta}}; }

void from_json(const json& j, LossWeights& w) {
  get_opt(j, "alpha", w.alpha);
  get_opt(j, "beta", w.beta);
}

void to_json(json& j, const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.conv_blocks) blocks.push_back(json::array({b.out_channels, b.convs}));
  j = json{{"input", json::array({c.channels, c.height, c.width})},
           {"conv_blocks", blocks},
           {"head_kind", head_name(c.head_kind)},
           {"hidden_dim", c.hidden_dim},
           {"num_classes", c.num_classes},
           {"grid_cells", c.grid_cells},
           {"regression_head", c.regression_head},
           {"neuron_dropout_rate", c.neuron_dropout_rate}};
}

void from_json(const json& j, ModelConfig& c) {
  if (auto it = j.find("input"); it != j.end()) {
    const auto v = it->get<std::vector<std::size_t>>();
    if (v.size() != 3) throw std::invalid_argument("model.input must be [channels, height, width]");
    c.channels = v[0];
    c.height = v[1];
    c.width = v[2];
  }
  if (auto it = j.find("conv_blocks"); it != j.end()) {
    c.conv_blocks.clear();
    for (const auto& b : *it) {
      const auto v = b.get<std::vector<std::size_t>>();
      if (v.size() != 2) throw std::invalid_argument("conv_blocks entries must be [out_channels, convs]");
      c.conv_blocks.push_back({v[0], v[1]});
    }
  }
  if (auto it = j.find("head_kind"); it != j.end()) c.head_kind = parse_head(it->get<std::string>());
  get_opt(j, "hidden_dim", c.hidden_dim);
  get_opt(j, "num_classes", c.num_classes);
  get_opt(j, "grid_cells", c.grid_cells);
  get_opt(j, "regression_head", c.regression_head);
  get_opt(j, "neuron_dropout_rate", c.neuron_dropout_rate);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"base_lr", c.base_lr},       {"decay_factor", c.decay_factor}, {"decay_every", c.decay_every},
           {"batch_size", c.batch_size}, {"epochs", c.epochs},             {"max_steps", c.max_steps},
           {"alpha", c.weights.alpha},   {"beta", c.weights.beta},         {"mode", to_string(c.mode)},
           {"use_regression", c.use_regression}, {"grid", c.grid},       {"seed", c.seed},
           {"eval_every", c.eval_every}, {"freeze_layers", c.freeze_layers}};
}

void from_json(const json& j, TrainConfig& c) {
  get_opt(j, "base_lr", c.base_lr);
  get_opt(j, "decay_factor", c.decay_factor);
  get_opt(j, "decay_every", c.decay_every);
  get_opt(j, "batch_size", c.batch_size);
  get_opt(j, "epochs", c.epochs);
  get_opt(j, "max_steps", c.max_steps);
  get_opt(j, "alpha", c.weights.alpha);
  get_opt(j, "beta", c.weights.beta);
  if (auto it = j.find("mode"); it != j.end()) c.mode = parse_train_mode(it->get<std::string>());
  get_opt(j, "use_regression", c.use_regression);
  if (auto it = j.find("grid"); it != j.end()) it->get_to(c.grid);
  get_opt(j, "seed", c.seed);
  get_opt(j, "eval_every", c.eval_every);
  get_opt(j, "freeze_layers", c.freeze_layers);
}

void to_json(json& j, const SynthSpec& s) {
  j = json{{"num_classes", s.num_classes},   {"image_size", s.image_size},     {"base_radius", s.base_radius},
           {"radius_step", s.radius_step},   {"noise_sigma", s.noise_sigma},   {"center_jitter", s.center_jitter},
           {"seed", s.seed}};
}

void from_json(const json& j, SynthSpec& s) {
  get_opt(j, "num_classes", s.num_classes);
  get_opt(j, "image_size", s.image_size);
  get_opt(j, "base_radius", s.base_radius);
  get_opt(j, "radius_step", s.radius_step);
  get_opt(j, "noise_sigma", s.noise_sigma);
  get_opt(j, "center_jitter", s.center_jitter);
  get_opt(j, "seed", s.seed);
}

json to_json(const FoldResult& r) {
  json records = json::array();
  for (const auto& e : r.records)
    records.push_back({{"step", e.step},
                       {"train_loss", e.train_loss},
                       {"test_loss", e.test_loss},
                       {"test_accuracy", e.test_accuracy}});
  return json{{"steps", r.steps},
              {"final_accuracy", r.final_accuracy},
              {"final_train_loss", r.final_train_loss},
              {"final_test_loss", r.final_test_loss},
              {"records", records}};
}

json to_json(const RunReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  return json{{"mode", to_string(r.mode)}, {"folds", folds}, {"mean_accuracy", r.mean_accuracy}};
}

json to_json(const AblationTable& t) {
  json rows = json::array();
  for (std::size_t m = 0; m < t.modes.size(); ++m) {
    json per_fold = json::array();
    for (std::size_t f = 0; f < t.folds; ++f) per_fold.push_back(t.fold_accuracy(m, f));
    json per_seed = json::array();
    for (std::size_t s = 0; s < t.seeds.size(); ++s) {
      json accs = json::array(), gaps = json::array();
      for (std::size_t f = 0; f < t.folds; ++f) {
        accs.push_back(t.cells[m][s][f].accuracy);
        gaps.push_back(t.cells[m][s][f].gap);
      }
      per_seed.push_back({{"seed", t.seeds[s]},
                          {"fold_accuracy", accs},
                          {"fold_gap", gaps},
                          {"mean_accuracy", t.seed_mean_accuracy(m, s)},
                          {"mean_gap", t.seed_mean_gap(m, s)}});
    }
    rows.push_back({{"mode", to_string(t.modes[m])},
                    {"fold_accuracy", per_fold},
                    {"mean_accuracy", t.mean_accuracy(m)},
                    {"median_mean_accuracy", t.median_mean_accuracy(m)},
                    {"median_gap", t.median_gap(m)},
                    {"seeds", per_seed}});
  }
  return json{{"folds", t.folds}, {"seeds", t.seeds}, {"rows", rows}};
}

std::string loss_log_line(std::size_t step, const LossBreakdown& loss, double lr) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["l_cla"] = loss.l_cla;
  j["l_reg"] = loss.l_reg ? json(*loss.l_reg) : json(nullptr);
  j["l_mask"] = loss.l_mask ? json(*loss.l_mask) : json(nullptr);
  j["total"] = loss.total;
  j["lr"] = lr;
  return j.dump();
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  if (key.find('.') != std::string::npos) {
    json* cur = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*cur)[part] = value;
        return;
      }
      cur = &(*cur)[part];
      start = dot + 1;
    }
  }
  if (doc.contains(key)) {
    doc[key] = value;
    return;
  }
  // Depth-first search through nested sections.
  std::function<bool(json&)> visit = [&](json& node) {
    for (auto& [name, section] : node.items()) {
      if (!section.is_object()) continue;
      if (section.contains(key)) {
        section[key] = value;
        return true;
      }
      if (visit(section)) return true;
    }
    return false;
  };
  if (visit(doc)) return;
  throw std::invalid_argument("override key '" + key + "' does not match any config entry");
}

}  // namespace ordgrid
