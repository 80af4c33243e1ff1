#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "u4d/model.hpp"
#include "u4d/training.hpp"

namespace u4d {

struct LoraConfig {
  std::size_t rank = 4;
  double alpha = 8.0;
  std::vector<std::string> targets{"blocks.*.attn.wq", "blocks.*.attn.wv"};

  double scale() const { return alpha / static_cast<double>(rank); }
};

struct ExperimentConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig training;
  LoraConfig lora;
  std::string out_dir = "runs/default";
};

// Every recognised key with its default value.
nlohmann::json default_config_json();

/// Merges `doc` over the defaults. Unknown sections or keys, wrong value types
/// and invalid enum strings throw ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
// ConfigError naming the path if it cannot be read or parsed.
nlohmann::json read_config_file(const std::string& path);

// "section.key=value"; value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// File, then overrides in order, then U4D_SEED (training.seed) from the environment.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config_json(nlohmann::json doc, const std::vector<std::string>& overrides = {});

nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace u4d
