#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "u4d/config.hpp"

namespace u4d {

Dataset build_dataset(const ExperimentConfig& cfg);
Model build_model(const ExperimentConfig& cfg);
// build_model plus the least-squares decoder fit on the training scenes. This is
// the state `train` starts from, so zero training steps save exactly this.
Model prepare_model(const ExperimentConfig& cfg, const Dataset& data);

/// Runs every configured stage in order on a prepared model. Stage 3 attaches
/// LoRA adapters first if none exist.
TrainReport run_training(Model& model, const Dataset& data, const ExperimentConfig& cfg);

enum class AblationAxis { fusion, embedding, mask, sampling };

AblationAxis parse_axis(std::string_view s);
std::string_view to_string(AblationAxis a);

struct AblationVariant {
  std::string label;
  std::vector<std::string> overrides;  // section.key=value
};

// Rows in the order the comparison tables list them.
std::vector<AblationVariant> ablation_variants(AblationAxis axis);

struct RunMetrics {
  UnderstandingMetrics understanding;
  GenerationMetrics generation;
  LossMetrics losses;
  double joint_loss = 0.0;  // lambda_ar * losses.ar + lambda_diff * losses.diff
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

struct AblationRow {
  AblationVariant variant;
  RunMetrics metrics;
};

struct AblationTable {
  AblationAxis axis;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Evaluation after training; `greedy` adds greedy decoding to the understanding metrics.
RunMetrics evaluate_run(Model& model, const Dataset& data, const ExperimentConfig& cfg, bool greedy = true);

/// Trains and evaluates every variant of `axis` from `base` with the same seed
/// and step count.
AblationTable run_ablation(const nlohmann::json& base_doc, AblationAxis axis, const std::vector<std::string>& overrides = {});

struct GradcheckRow {
  TaskKind task;
  ParamGroup group;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

struct GradcheckReport {
  double tolerance = 1e-4;
  std::vector<GradcheckRow> rows;

  bool passed() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Tape gradients of the understanding and generation losses against a
/// fourth-order central difference, on `coords_per_param` seeded coordinates of
/// every parameter. LoRA adapters are attached with a nonzero B so both factors
/// get a gradient. `fault` scales one group's tape gradients by 1.01, which
/// must be caught.
GradcheckReport model_gradcheck(const ExperimentConfig& cfg, std::size_t coords_per_param = 3,
                                std::optional<ParamGroup> fault = std::nullopt);

}  // namespace u4d
