#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "u4d/data.hpp"
#include "u4d/model.hpp"

namespace u4d {

// Mean NLL over target positions; -1 and PAD targets are skipped. ContractError
// for ids outside the vocabulary.
Tensor loss_ar(const Tensor& probs, const std::vector<std::int64_t>& targets);
// Mean squared error; DimensionError on shape mismatch.
Tensor loss_diff(const Tensor& eps_hat, const Tensor& eps);
// lambda_ar * l_ar + lambda_diff * l_diff. An undefined term counts as zero.
Tensor total_loss(const Tensor& l_ar, const Tensor& l_diff, double lambda_ar, double lambda_diff);

// Distribution of the diffusion step t. `uniform` draws every step equally;
// `high_noise` draws t with probability proportional to 1 + level(t)^2 / sigma_data^2,
// the share of the gradient the high-noise steps get when the clean estimate is
// what is regressed. The per-example loss is the same noise MSE either way.
enum class TSampling { uniform, high_noise };

TSampling parse_t_sampling(std::string_view s);
std::string_view to_string(TSampling s);

// Cumulative probabilities of t = 1..T.
std::vector<double> t_distribution(TSampling s, const NoiseSchedule& sched, double sigma_data);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  double lambda_ar = 1.0;
  double lambda_diff = 1.0;
  std::vector<int> stages{kJointStage};
  std::size_t batch_size = 1;
  std::vector<TaskKind> tasks{TaskKind::understanding, TaskKind::generation};
  std::size_t eval_every = 0;  // 0: no in-loop generation eval
  bool report_wall_clock = false;
  TSampling t_sampling = TSampling::uniform;
};

/// Bias-corrected adaptive moments with decoupled weight decay.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double weight_decay, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), wd_(weight_decay), eps_(eps) {}

  // Updates every parameter that requires grad and holds a gradient.
  void step(ParamStore& store);
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, b1_, b2_, wd_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct DataConfig {
  SceneConfig scene;
  std::size_t num_scenes = 16;
  std::uint64_t seed = 0;
  std::size_t items_per_scene = 0;  // 0: caption plus every QA pair
  bool time_reversal_pairs = false;
  int num_condition = 1;
  double p_noise = 1.0;
};

struct Dataset {
  std::vector<Scene4D> scenes;
  std::vector<SceneInputs> inputs;
  std::vector<TrainingExample> understanding;
  std::vector<TrainingExample> generation;

  std::vector<const SceneInputs*> input_ptrs() const;
};

// With time_reversal_pairs every odd scene is the time-reversed twin of the one
// before it.
Dataset build_dataset(const DataConfig& cfg, std::size_t patch, std::size_t text_len);

struct StepRecord {
  std::size_t step = 0;
  int stage = 0;
  TaskKind task = TaskKind::understanding;
  std::optional<double> loss_ar, loss_diff;
  double total = 0.0;
  std::optional<double> token_accuracy;
  std::optional<double> eval_psnr;
  std::optional<double> wall_seconds;
};

struct TrainReport {
  std::vector<StepRecord> records;

  std::string to_ndjson() const;
  // Mean of the last `window` recorded losses for a task (NaN if none).
  double final_loss(TaskKind task, std::size_t window = 20) const;
};

struct UnderstandingMetrics {
  double token_accuracy = 0.0;        // teacher-forced, every target position
  double exact_match = 0.0;           // greedy decode equals the answer
  double ts_token_accuracy = 0.0;     // the same two, time-sensitive items only
  double ts_exact_match = 0.0;
  std::size_t tokens = 0, sequences = 0, ts_sequences = 0;
};

struct GenerationMetrics {
  double psnr = 0.0;            // target frames, after denoising
  double psnr_no_denoise = 0.0; // target frames decoded straight from x_T
  double psnr_ceiling = 0.0;    // target frames decoded from the clean latent
  std::vector<double> residual_norms;  // mean over examples, t = T..1
  std::size_t examples = 0;
};

/// Runs `cfg.steps` optimizer steps at the given stage. Steps alternate between
/// the configured tasks; each step averages `batch_size` examples. Throws
/// DivergenceError on a non-finite loss.
TrainReport train_loop(Model& model, const Dataset& data, const TrainConfig& cfg, int stage,
                       std::size_t step_offset = 0);

struct LossMetrics {
  double ar = 0.0;    // mean over every understanding example
  double diff = 0.0;  // mean over every generation example at every step t, fixed noise draws
};
LossMetrics evaluate_losses(Model& model, const Dataset& data, std::uint64_t seed);

UnderstandingMetrics evaluate_understanding(Model& model, const Dataset& data, bool greedy = true);
// `oracle` replaces the trained predictor with the injected noise and starts
// from x_0 + sigma_total * eps, the exact-recovery fixture.
GenerationMetrics evaluate_generation(Model& model, const Dataset& data, std::uint64_t seed, bool oracle = false);

// Frames that contain at least one noisy token, gathered into [K, H, W, C].
Tensor target_frames(const Tensor& frames, const TrainingExample& ex, const FrameDims& dims);

}  // namespace u4d
