#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "u4d/tensor.hpp"

namespace u4d {

enum class ScheduleKind { linear, cosine };

ScheduleKind parse_schedule(std::string_view s);
std::string_view to_string(ScheduleKind k);

/// Per-step magnitudes alpha_1..alpha_T normalised so they sum to sigma_total.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;  // T = 0: the denoise loop passes its input through
  NoiseSchedule(ScheduleKind kind, std::size_t steps, double sigma_total);

  ScheduleKind kind() const { return kind_; }
  std::size_t steps() const { return alphas_.size(); }
  double sigma_total() const { return sigma_; }
  const std::vector<double>& alphas() const { return alphas_; }
  // 1-based step index.
  double alpha(std::size_t t) const;
  // alpha_1 + ... + alpha_t, the residual noise left after denoising down to t.
  double level(std::size_t t) const;

 private:
  ScheduleKind kind_ = ScheduleKind::linear;
  double sigma_ = 0.0;
  std::vector<double> alphas_;
  std::vector<double> levels_;
};

// Frame geometry shared by the patch helpers.
struct FrameDims {
  std::size_t views, times, height, width, channels, patch;

  std::size_t patches_per_frame() const { return (height / patch) * (width / patch); }
  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t tokens() const { return views * times * patches_per_frame(); }
  void validate() const;
};

// [V,F,H,W,C] -> [V*F*P, patch*patch*C], rows in (view, time, patch) order and
// patches in raster order. Throws ConfigError when the patch does not divide H, W.
Tensor patchify(const Tensor& frames, const FrameDims& dims);
Tensor unpatchify(const Tensor& patches, const FrameDims& dims);

// z_v = patches * W + b + pos[p], one row per visual token.
Tensor encode_visual(const Tensor& patches, const Tensor& w, const Tensor& b, const Tensor& pos);

// Two-layer GELU MLP.
Tensor mlp2(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

Tensor semantic_embed(const Tensor& z_v, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

/// f_a = (1 - m) * (z_v W_a) + m * (z_v W_a + intensity * eps). m holds one
/// 0/1 entry per row; any other value throws ContractError.
Tensor noise_embed(const Tensor& z_v, const Tensor& w_a, const std::vector<double>& m, double intensity,
                   const Tensor& eps);
// Same, with intensity alpha_t of the schedule.
Tensor noise_embed(const Tensor& z_v, const Tensor& w_a, const std::vector<double>& m, std::size_t t,
                   const Tensor& eps, const NoiseSchedule& sched);

// [F, 2*n] = [sin(2 pi f_k t) | cos(2 pi f_k t)].
Tensor fourier_time(const std::vector<double>& times, const Tensor& freqs);
// Geometric initial frequencies 1, 2, ..., 2^(n-1).
Tensor initial_frequencies(std::size_t n_freq);

enum class EmbeddingMode { none, spatial, spatiotemporal };

EmbeddingMode parse_embedding_mode(std::string_view s);
std::string_view to_string(EmbeddingMode m);

struct GeometricLatent {
  Tensor z_pose;  // [V, d_g]
  Tensor z_posi;  // [V*F*P, d_g]
};

struct SpatiotemporalFeatures {
  Tensor posi;  // [V*F*P, d]
  Tensor pose;  // [V*F, d], one row per (view, time)
};

// Raw geometry through the trainable linear stand-in encoder.
GeometricLatent encode_geometry(const Tensor& raw_pose, const Tensor& raw_posi, const Tensor& w_pose,
                                const Tensor& b_pose, const Tensor& w_posi, const Tensor& b_posi);

/// f_4D = W_4D [z || F(t)] + b for the position and pose streams. `spatial`
/// zeroes the F(t) block, `none` zeroes both blocks.
SpatiotemporalFeatures spatiotemporal_embed(const GeometricLatent& geo, const FrameDims& dims,
                                            const std::vector<double>& times, const Tensor& freqs,
                                            const Tensor& w4d, const Tensor& b4d, EmbeddingMode mode);

// Token index i of a (V, F, P) flattening.
struct TokenIndex {
  std::size_t view, time, patch;
};
TokenIndex token_index(std::size_t i, const FrameDims& dims);

Tensor project_tokens(const Tensor& f, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

// Linear un-patchify of per-token features into frames clamped to [0, 1]. The
// bias is per patch position, [P, patch_dim], mirroring the encoder's offset.
Tensor decode_visual(const Tensor& tokens, const Tensor& w, const Tensor& b, const FrameDims& dims);

}  // namespace u4d
