#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "u4d/embeddings.hpp"
#include "u4d/masks.hpp"
#include "u4d/tensor.hpp"

namespace u4d {

struct BackboneConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 0;
  std::size_t T = 8;
  std::size_t layer_split = 2;  // layers [0, split) are "lower"

  // ConfigError on d_model % num_heads != 0 or a split outside 1..num_layers.
  void validate() const;
};

struct BlockWeights {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

// Attention probabilities per head, collected when a trace is passed in.
struct AttentionTrace {
  std::vector<std::vector<Tensor>> layers;  // [layer][head] -> [N, N]
};

/// Pre-norm block: h + MHSA(LN(h)) then + FFN(LN(.)). Every head uses `mask`.
Tensor transformer_block(const Tensor& h, const AttentionMask& mask, const BlockWeights& w, std::size_t num_heads,
                         std::vector<Tensor>* head_probs = nullptr);

// Applies block l with masks[l]. ConfigError when the counts differ.
Tensor backbone_forward(const Tensor& x, const std::vector<const AttentionMask*>& masks,
                        const std::vector<BlockWeights>& layers, std::size_t num_heads,
                        AttentionTrace* trace = nullptr);

// softmax(LN(h) W_u) at the given rows.
Tensor ar_head(const Tensor& h, const std::vector<std::size_t>& rows, const Tensor& ln_g, const Tensor& ln_b,
               const Tensor& w_u);

// Two-layer MLP on LN(h) at the given rows.
Tensor diffusion_head(const Tensor& h, const std::vector<std::size_t>& rows, const Tensor& ln_g, const Tensor& ln_b,
                      const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

// Greedy argmax with first-index tie-breaking.
std::int64_t argmax_row(const Tensor& probs, std::size_t row);

// Predicted noise [N_noisy, d] for the current state x^(t) at step t.
using NoisePredictor = std::function<Tensor(const Tensor& x_t, std::size_t t)>;

struct DenoiseResult {
  Tensor x0;                           // full [N, d]; condition rows untouched
  std::vector<double> residual_norms;  // RMS of alpha_t * eps_hat, in order t = T..1
};

/// x^(t-1) = x^(t) - alpha_t eps_hat^(t) on the noisy rows for t = T..1. The
/// condition rows are copied back from x_T after every step. T = 0 returns x_T
/// with a warning on stderr.
DenoiseResult denoise_loop(const Tensor& x_T, const std::vector<std::uint8_t>& noisy, const NoiseSchedule& sched,
                           const NoisePredictor& predict);

}  // namespace u4d
