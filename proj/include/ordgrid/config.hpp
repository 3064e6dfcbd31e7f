#pragma once

// JSON mapping of the configuration structs plus flat key=value overrides.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordgrid/data.hpp"
#include "ordgrid/model.hpp"
#include "ordgrid/trainer.hpp"

namespace ordgrid {

void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

nlohmann::json to_json(const FoldResult& r);
nlohmann::json to_json(const RunReport& r);
nlohmann::json to_json(const AblationTable& t);

/// {"step", "l_cla", "l_reg", "l_mask", "total", "lr"} with null for absent terms.
std::string loss_log_line(std::size_t step, const LossBreakdown& loss, double lr);

/// Applies "key=value" to `doc`. Dotted keys address nested objects; a bare
/// key matches a top-level entry or, failing that, the first section object
/// that already holds it. Values parse as JSON when possible, else as strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace ordgrid
