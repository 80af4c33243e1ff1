#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "u4d/tensor.hpp"

namespace u4d {

class AttentionMask;

/// Additive bias applied to disallowed attention logits before exponentiation.
inline constexpr double kMaskedLogit = -1e30;

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// s * x with s a one-element tensor.
Tensor scale_by(const Tensor& x, const Tensor& s);
// alpha * a + (1 - alpha) * b, alpha a one-element tensor.
Tensor blend(const Tensor& a, const Tensor& b, const Tensor& alpha);

// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);

// A[m,k] x B[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., k] x W[k, n] (+ b[n]); leading axes are treated as rows.
Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Row-wise views on a matrix-shaped tensor (rank 2) or, for the row ops, any
// tensor whose leading axes flatten into rows of the last extent.
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Repeats a [1, d] row n times.
Tensor repeat_row(const Tensor& row, std::size_t n);

/// Row softmax with an optional boolean allow-mask (additive kMaskedLogit
/// convention). Rows with no allowed entry become all zeros and are counted in
/// `fully_masked_rows` when provided.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x, const AttentionMask& mask, std::size_t* fully_masked_rows = nullptr);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Mean negative log-likelihood of targets under row-normalized probabilities;
// targets equal to `ignore_id` are skipped.
Tensor nll_from_probs(const Tensor& probs, const std::vector<std::int64_t>& targets,
                      std::int64_t ignore_id = -1);
// Mean of (pred - target)^2 over every coordinate; target is a constant.
Tensor mse(const Tensor& pred, const Tensor& target);

// [sin(2*pi*f_k*t) ..., cos(2*pi*f_k*t) ...] per time value; differentiable in freqs.
Tensor fourier_features(const std::vector<double>& times, const Tensor& freqs);

}  // namespace u4d
