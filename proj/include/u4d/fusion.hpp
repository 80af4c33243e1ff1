#pragma once

#include <string_view>

#include "u4d/embeddings.hpp"
#include "u4d/tensor.hpp"

namespace u4d {

enum class FusionStrategy { concat, weighting, attention };

FusionStrategy parse_fusion(std::string_view s);
std::string_view to_string(FusionStrategy s);

// alpha = sigmoid(MLP(f_task)), a [1] tensor.
Tensor task_alpha(const Tensor& prompt, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

// alpha * f_s + (1 - alpha) * f_a
Tensor task_fuse(const Tensor& f_s, const Tensor& f_a, const Tensor& alpha);

// alpha * posi + (1 - alpha) * pose, pose rows broadcast over the P patches of their frame.
Tensor geo_fuse(const Tensor& posi, const Tensor& pose, const Tensor& alpha, std::size_t patches_per_frame);

// Single-head attention softmax(q k^T / sqrt(d)) v for one query/key group.
Tensor attend(const Tensor& queries, const Tensor& keys_in, const Tensor& wq, const Tensor& wk, const Tensor& wv);

/// Per-(view, time) cross-attention: each frame's P patch queries read the P
/// geometric rows of the same frame plus that frame's pose row.
Tensor cross_attention(const Tensor& f_v, const Tensor& f_4d, const Tensor& pose, std::size_t patches_per_frame,
                       const Tensor& wq, const Tensor& wk, const Tensor& wv);

struct FusionWeights {
  Tensor wq, wk, wv;     // attention
  Tensor w_cat, b_cat;   // concat: [4d, d], [d]
};

struct FusionInputs {
  Tensor f_s, f_a;       // [N, d]
  SpatiotemporalFeatures f_4d;
  Tensor alpha;          // [1]; ignored by concat and weighting
  std::size_t patches_per_frame = 1;
};

/// concat: [f_s | f_a | posi | pose] projected back to d. weighting: fixed
/// 0.5/0.5 blends plus additive geometry. attention: the gated blends followed
/// by cross-attention, plus the blended visual features when `residual` is set.
Tensor fuse_variant(FusionStrategy strategy, const FusionInputs& in, const FusionWeights& w, bool residual);

}  // namespace u4d
