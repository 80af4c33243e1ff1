#include "u4d/backbone.hpp"

#include <cmath>
#include <iostream>

#include "u4d/errors.hpp"
#include "u4d/ops.hpp"

namespace u4d {

void BackboneConfig::validate() const {
  if (d_model == 0 || num_heads == 0 || d_model % num_heads != 0) {
    throw ConfigError("model.d_model (" + std::to_string(d_model) + ") must be divisible by model.num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  if (num_layers > 0 && (layer_split < 1 || layer_split > num_layers)) {
    throw ConfigError("model.layer_split must lie in 1.." + std::to_string(num_layers));
  }
  if (d_ff == 0) throw ConfigError("model.d_ff must be positive");
}

Tensor transformer_block(const Tensor& h, const AttentionMask& mask, const BlockWeights& w, std::size_t num_heads,
                         std::vector<Tensor>* head_probs) {
  const std::size_t n = h.dim(0), d = h.dim(1);
  if (mask.size() != n) {
    throw DimensionError("transformer_block: mask is " + std::to_string(mask.size()) + "x" +
                         std::to_string(mask.size()) + " for " + std::to_string(n) + " tokens");
  }
  const std::size_t dh = d / num_heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor x = layer_norm(h, w.ln1_g, w.ln1_b);
  const Tensor q = linear(x, w.wq), k = linear(x, w.wk), v = linear(x, w.wv);
  std::vector<Tensor> outs;
  outs.reserve(num_heads);
  for (std::size_t hd = 0; hd < num_heads; ++hd) {
    const Tensor qh = slice_cols(q, hd * dh, dh);
    const Tensor kh = slice_cols(k, hd * dh, dh);
    const Tensor vh = slice_cols(v, hd * dh, dh);
    const Tensor p = softmax_rows(scale(matmul(qh, transpose(kh)), s), mask);
    if (head_probs) head_probs->push_back(p);
    outs.push_back(matmul(p, vh));
  }
  const Tensor attn = num_heads == 1 ? outs[0] : concat_cols(outs);
  const Tensor h1 = add(h, linear(attn, w.wo));
  const Tensor ff = linear(gelu(linear(layer_norm(h1, w.ln2_g, w.ln2_b), w.w1, w.b1)), w.w2, w.b2);
  return add(h1, ff);
}

Tensor backbone_forward(const Tensor& x, const std::vector<const AttentionMask*>& masks,
                        const std::vector<BlockWeights>& layers, std::size_t num_heads, AttentionTrace* trace) {
  if (masks.size() != layers.size()) {
    throw ConfigError("mask schedule has " + std::to_string(masks.size()) + " entries for " +
                      std::to_string(layers.size()) + " layers");
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<Tensor>* probs = nullptr;
    if (trace) probs = &trace->layers.emplace_back();
    h = transformer_block(h, *masks[l], layers[l], num_heads, probs);
  }
  return h;
}

Tensor ar_head(const Tensor& h, const std::vector<std::size_t>& rows, const Tensor& ln_g, const Tensor& ln_b,
               const Tensor& w_u) {
  return softmax_rows(linear(layer_norm(gather_rows(h, rows), ln_g, ln_b), w_u));
}

Tensor diffusion_head(const Tensor& h, const std::vector<std::size_t>& rows, const Tensor& ln_g, const Tensor& ln_b,
                      const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return linear(gelu(linear(layer_norm(gather_rows(h, rows), ln_g, ln_b), w1, b1)), w2, b2);
}

std::int64_t argmax_row(const Tensor& probs, std::size_t row) {
  const std::size_t n = probs.dim(1);
  const auto p = probs.data().subspan(row * n, n);
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j) {
    if (p[j] > p[best]) best = j;
  }
  return static_cast<std::int64_t>(best);
}

DenoiseResult denoise_loop(const Tensor& x_T, const std::vector<std::uint8_t>& noisy, const NoiseSchedule& sched,
                           const NoisePredictor& predict) {
  if (x_T.rank() != 2 || noisy.size() != x_T.dim(0)) {
    throw DimensionError("denoise_loop: state " + shape_str(x_T.shape()) + " with " + std::to_string(noisy.size()) +
                         " noise flags");
  }
  DenoiseResult out;
  const std::size_t d = x_T.dim(1);
  const auto cond = x_T.data();
  std::vector<double> x(cond.begin(), cond.end());
  if (sched.steps() == 0) {
    std::cerr << "warning: T = 0, denoising loop returns its input unchanged\n";
    out.x0 = Tensor(x_T.shape(), std::move(x));
    return out;
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    if (noisy[i]) rows.push_back(i);
  }
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const Tensor eps = predict(Tensor(x_T.shape(), x), t);
    if (eps.rank() != 2 || eps.dim(0) != rows.size() || eps.dim(1) != d) {
      throw DimensionError("denoise_loop: predictor returned " + shape_str(eps.shape()) + " for " +
                           std::to_string(rows.size()) + " noisy rows");
    }
    const double a = sched.alpha(t);
    const auto e = eps.data();
    double ss = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double step = a * e[r * d + c];
        x[rows[r] * d + c] -= step;
        ss += step * step;
      }
    }
    // reinsert the condition rows
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (!noisy[i]) std::copy_n(cond.begin() + i * d, d, x.begin() + i * d);
    }
    out.residual_norms.push_back(rows.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(rows.size() * d)));
  }
  out.x0 = Tensor(x_T.shape(), std::move(x));
  return out;
}

}  // namespace u4d
