#include "u4d/fusion.hpp"

#include <cmath>

#include "u4d/errors.hpp"
#include "u4d/masks.hpp"
#include "u4d/ops.hpp"

namespace u4d {

FusionStrategy parse_fusion(std::string_view s) {
  if (s == "concat") return FusionStrategy::concat;
  if (s == "weighting") return FusionStrategy::weighting;
  if (s == "attention") return FusionStrategy::attention;
  throw ConfigError("unknown fusion strategy '" + std::string(s) + "' (expected concat|weighting|attention)");
}

std::string_view to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::concat: return "concat";
    case FusionStrategy::weighting: return "weighting";
    case FusionStrategy::attention: return "attention";
  }
  return "?";
}

Tensor task_alpha(const Tensor& prompt, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  const Tensor row = prompt.rank() == 1 ? reshape(prompt, {1, prompt.dim(0)}) : prompt;
  return reshape(sigmoid(linear(gelu(linear(row, w1, b1)), w2, b2)), {1});
}

Tensor task_fuse(const Tensor& f_s, const Tensor& f_a, const Tensor& alpha) {
  if (f_s.shape() != f_a.shape()) {
    throw DimensionError("task_fuse: " + shape_str(f_s.shape()) + " vs " + shape_str(f_a.shape()));
  }
  return blend(f_s, f_a, alpha);
}

namespace {

Tensor broadcast_pose(const Tensor& pose, std::size_t P) {
  std::vector<std::size_t> idx(pose.dim(0) * P);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i / P;
  return gather_rows(pose, idx);
}

}  // namespace

Tensor geo_fuse(const Tensor& posi, const Tensor& pose, const Tensor& alpha, std::size_t P) {
  if (P == 0 || posi.rank() != 2 || pose.rank() != 2 || pose.dim(0) * P != posi.dim(0) || pose.dim(1) != posi.dim(1)) {
    throw DimensionError("geo_fuse: cannot broadcast pose " + shape_str(pose.shape()) + " over positions " +
                         shape_str(posi.shape()));
  }
  return blend(posi, broadcast_pose(pose, P), alpha);
}

Tensor attend(const Tensor& queries, const Tensor& keys_in, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  const Tensor q = linear(queries, wq);
  const Tensor k = linear(keys_in, wk);
  const Tensor v = linear(keys_in, wv);
  const double s = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return matmul(softmax_rows(scale(matmul(q, transpose(k)), s)), v);
}

Tensor cross_attention(const Tensor& f_v, const Tensor& f_4d, const Tensor& pose, std::size_t P, const Tensor& wq,
                       const Tensor& wk, const Tensor& wv) {
  if (f_v.shape() != f_4d.shape() || P == 0 || pose.dim(0) * P != f_v.dim(0)) {
    throw DimensionError("cross_attention: visual " + shape_str(f_v.shape()) + ", geometry " +
                         shape_str(f_4d.shape()) + ", pose " + shape_str(pose.shape()));
  }
  // All frames in one product; a block mask keeps every query inside its own frame.
  const std::size_t n = f_v.dim(0), frames = pose.dim(0);
  const Tensor keys_in = concat_rows({f_4d, pose});
  const Tensor q = linear(f_v, wq);
  const Tensor k = linear(keys_in, wk);
  const Tensor v = linear(keys_in, wv);
  AttentionMask block(n + frames);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t fr = i / P;
    for (std::size_t j = fr * P; j < (fr + 1) * P; ++j) block.set(i, j, true);
    block.set(i, n + fr, true);
  }
  // softmax_rows wants a square mask; pad the query side with the pose rows.
  const Tensor scores = scale(matmul(concat_rows({q, linear(pose, wq)}), transpose(k)),
                              1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  for (std::size_t r = n; r < n + frames; ++r) block.set(r, r, true);
  const Tensor probs = softmax_rows(scores, block);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return gather_rows(matmul(probs, v), rows);
}

Tensor fuse_variant(FusionStrategy strategy, const FusionInputs& in, const FusionWeights& w, bool residual) {
  const std::size_t P = in.patches_per_frame;
  switch (strategy) {
    case FusionStrategy::concat:
      return linear(concat_cols({in.f_s, in.f_a, in.f_4d.posi, broadcast_pose(in.f_4d.pose, P)}), w.w_cat, w.b_cat);
    case FusionStrategy::weighting: {
      const Tensor half = Tensor::scalar(0.5);
      return add(blend(in.f_s, in.f_a, half), geo_fuse(in.f_4d.posi, in.f_4d.pose, half, P));
    }
    case FusionStrategy::attention: {
      const Tensor f_v = task_fuse(in.f_s, in.f_a, in.alpha);
      const Tensor f_g = geo_fuse(in.f_4d.posi, in.f_4d.pose, in.alpha, P);
      const Tensor f_uni = cross_attention(f_v, f_g, in.f_4d.pose, P, w.wq, w.wk, w.wv);
      return residual ? add(f_v, f_uni) : f_uni;
    }
  }
  throw ConfigError("unknown fusion strategy");
}

}  // namespace u4d
