#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "u4d/backbone.hpp"
#include "u4d/data.hpp"
#include "u4d/embeddings.hpp"
#include "u4d/fusion.hpp"
#include "u4d/masks.hpp"
#include "u4d/params.hpp"
#include "u4d/scene.hpp"

namespace u4d {

// What the diffusion head's MLP output F stands for. `noise` reads it as eps_hat
// directly. `preconditioned` forms a clean estimate D = c_skip x_t + c_out F
// (c_skip = sd^2/(c^2+sd^2), c_out = c sd/sqrt(c^2+sd^2), c = level(t),
// sd = sigma_data) and reports eps_hat = (x_t - D) / c, which keeps the
// regression target near unit scale at every step.
enum class Prediction { noise, preconditioned };

Prediction parse_prediction(std::string_view s);
std::string_view to_string(Prediction p);

struct ModelConfig {
  BackboneConfig backbone;
  ScheduleKind schedule = ScheduleKind::linear;
  double sigma_total = 1.0;
  Prediction prediction = Prediction::preconditioned;
  double sigma_data = 0.3;
  std::size_t d_v = 32, d_g = 32, patch = 4, n_freq = 4, d_task = 16, text_len = 24;
  // frame geometry the visual stand-ins are built for
  std::size_t height = 16, width = 16, channels = 3;
  std::size_t se_hidden = 64, proj_hidden = 128, head_hidden = 128, alpha_hidden = 16;
  FusionStrategy fusion = FusionStrategy::attention;
  bool fusion_residual = true;
  EmbeddingMode embedding = EmbeddingMode::spatiotemporal;
  bool mask_enabled = true;
  SamplingStrategy sampling = SamplingStrategy::alternating;

  void validate() const;
};

/// Everything the model reads from a scene, precomputed once.
struct SceneInputs {
  FrameDims dims{};
  Tensor patches;                 // [N_vis, patch*patch*C]
  Tensor raw_pose;                // [V, 7]
  Tensor raw_posi;                // [N_vis, 3], surface point under each patch centre
  std::vector<double> timestamps;
  Tensor frames;                  // [V, F, H, W, C] ground truth
};

SceneInputs scene_inputs(const Scene4D& scene, std::size_t patch);

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const NoiseSchedule& schedule() const { return sched_; }

  Tensor latent(const SceneInputs& in) const;            // z_v
  Tensor appearance(const SceneInputs& in) const;        // W_a z_v
  Tensor alpha(TaskKind task) const;

  // Visual tokens for the backbone. `f_a` holds the appearance rows (noisy rows
  // already carry their noise); `t` > 0 adds the step embedding on noisy rows.
  Tensor visual_tokens(const SceneInputs& in, const Tensor& f_a, const std::vector<std::uint8_t>& noisy,
                       TaskKind task, std::size_t t) const;
  Tensor text_tokens(const std::vector<std::int64_t>& ids) const;

  std::vector<const AttentionMask*> mask_schedule(const TrainingExample& ex);
  std::vector<BlockWeights> blocks() const;

  Tensor understanding_hidden(const SceneInputs& in, const TrainingExample& ex, AttentionTrace* trace = nullptr);
  // Next-token distributions at every linguistic position, [L, vocab].
  Tensor understanding_probs(const SceneInputs& in, const TrainingExample& ex, AttentionTrace* trace = nullptr);

  Tensor generation_hidden(const SceneInputs& in, const TrainingExample& ex, const Tensor& x, std::size_t t,
                           AttentionTrace* trace = nullptr);
  // eps_hat at the noisy rows, [N_noisy, d].
  Tensor predict_noise(const SceneInputs& in, const TrainingExample& ex, const Tensor& x, std::size_t t);

  // Greedy continuation of the instruction until EOS or the text budget.
  std::vector<std::int64_t> greedy_decode(const SceneInputs& in, const TrainingExample& ex);

  // x_T: condition rows clean, noisy rows sigma_total * eps with eps drawn from `seed`.
  Tensor initial_state(const SceneInputs& in, const TrainingExample& ex, std::uint64_t seed) const;
  DenoiseResult sample(const SceneInputs& in, const TrainingExample& ex, std::uint64_t seed);
  Tensor decode(const Tensor& x, const FrameDims& dims) const;

  // Least-squares fit of the frozen decoder from clean appearance rows to pixels.
  void calibrate_decoder(const std::vector<const SceneInputs*>& scenes);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  NoiseSchedule sched_;
  MaskCache masks_;
};

}  // namespace u4d
