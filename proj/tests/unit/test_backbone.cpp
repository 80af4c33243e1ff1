#include <gtest/gtest.h>

#include "helpers.hpp"
#include "u4d/backbone.hpp"
#include "u4d/errors.hpp"
#include "u4d/masks.hpp"

using namespace u4d;
using test::randn;

namespace {

constexpr std::size_t kD = 8, kHeads = 2;

BlockWeights random_block(Rng& rng) {
  BlockWeights w;
  w.ln1_g = randn({kD}, rng);
  w.ln1_b = randn({kD}, rng);
  w.wq = randn({kD, kD}, rng, 0.5);
  w.wk = randn({kD, kD}, rng, 0.5);
  w.wv = randn({kD, kD}, rng, 0.5);
  w.wo = randn({kD, kD}, rng, 0.5);
  w.ln2_g = randn({kD}, rng);
  w.ln2_b = randn({kD}, rng);
  w.w1 = randn({kD, 16}, rng, 0.5);
  w.b1 = randn({16}, rng);
  w.w2 = randn({16, kD}, rng, 0.5);
  w.b2 = randn({kD}, rng);
  return w;
}

double row_diff(const Tensor& a, const Tensor& b, std::size_t r) {
  double d = 0;
  for (std::size_t c = 0; c < a.dim(1); ++c) d += std::abs(a.at(r * a.dim(1) + c) - b.at(r * a.dim(1) + c));
  return d;
}

}  // namespace

TEST(Backbone, TextPositionsNeverSeeTheFuture) {
  Rng rng(10);
  const TokenLayout l({{TokenRole::visual_clean, 0, 0, 3}, {TokenRole::linguistic, std::nullopt, std::nullopt, 6}});
  const AttentionMask m = build_understanding_mask(l);
  const std::vector<BlockWeights> layers{random_block(rng), random_block(rng), random_block(rng)};
  const std::vector<const AttentionMask*> masks(3, &m);
  const Tensor x = randn({9, kD}, rng);
  const Tensor base = backbone_forward(x, masks, layers, kHeads);
  for (std::size_t j = 3; j < 9; ++j) {
    Tensor xp = x.detach();
    for (std::size_t c = 0; c < kD; ++c) xp.mutable_data()[j * kD + c] += 0.7;
    const Tensor out = backbone_forward(xp, masks, layers, kHeads);
    for (std::size_t i = 0; i < 9; ++i) {
      if (i < j) {
        EXPECT_EQ(row_diff(base, out, i), 0.0) << "row " << i << " moved when token " << j << " changed";
      } else if (i == j) {
        EXPECT_GT(row_diff(base, out, i), 1e-9);
      }
    }
  }
}

TEST(Backbone, CleanRowsIgnoreNoisyRows) {
  Rng rng(11);
  const TokenLayout l({{TokenRole::linguistic, std::nullopt, std::nullopt, 2},
                       {TokenRole::visual_clean, 0, 0, 2},
                       {TokenRole::visual_noisy, 0, 1, 2},
                       {TokenRole::visual_noisy, 1, 1, 2}});
  const std::vector<BlockWeights> layers{random_block(rng), random_block(rng)};
  for (auto level : {MaskLevel::view, MaskLevel::time, MaskLevel::full}) {
    const AttentionMask m = build_generation_mask(l, level);
    const std::vector<const AttentionMask*> masks(2, &m);
    const Tensor x = randn({8, kD}, rng);
    Tensor xp = x.detach();
    for (std::size_t i = 4 * kD; i < 8 * kD; ++i) xp.mutable_data()[i] += rng.normal() * 3.0;
    const Tensor a = backbone_forward(x, masks, layers, kHeads), b = backbone_forward(xp, masks, layers, kHeads);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_LE(row_diff(a, b, r), 1e-12) << to_string(level) << " row " << r;
  }
}

TEST(Backbone, MaskCountMustMatchLayers) {
  Rng rng(12);
  const AttentionMask m = AttentionMask::full(2);
  EXPECT_THROW(backbone_forward(randn({2, kD}, rng), {&m}, {random_block(rng), random_block(rng)}, kHeads), ConfigError);
}

TEST(Backbone, TraceHoldsRowStochasticProbabilities) {
  Rng rng(13);
  const TokenLayout l({{TokenRole::linguistic, std::nullopt, std::nullopt, 5}});
  const AttentionMask m = build_understanding_mask(l);
  AttentionTrace trace;
  backbone_forward(randn({5, kD}, rng), {&m}, {random_block(rng)}, kHeads, &trace);
  ASSERT_EQ(trace.layers.size(), 1u);
  ASSERT_EQ(trace.layers[0].size(), kHeads);
  for (const auto& p : trace.layers[0]) {
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        if (j > i) EXPECT_EQ(p.at(i * 5 + j), 0.0);
        s += p.at(i * 5 + j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Backbone, ArgmaxTakesTheFirstTie) {
  Tensor p({2, 4}, {0.1, 0.4, 0.4, 0.1, 0.25, 0.25, 0.25, 0.25});
  EXPECT_EQ(argmax_row(p, 0), 1);
  EXPECT_EQ(argmax_row(p, 1), 0);
}

TEST(Denoise, TelescopesToTheSumOfSteps) {
  Rng rng(14);
  const NoiseSchedule sched(ScheduleKind::cosine, 6, 1.3);
  const std::vector<std::uint8_t> noisy{0, 1, 1, 0, 1};
  const Tensor xT = randn({5, 3}, rng);
  std::vector<Tensor> eps;
  for (int k = 0; k < 6; ++k) eps.push_back(randn({3, 3}, rng));
  std::vector<std::size_t> seen;
  const auto res = denoise_loop(xT, noisy, sched, [&](const Tensor&, std::size_t t) {
    seen.push_back(t);
    return eps[t - 1];
  });
  EXPECT_EQ(seen, (std::vector<std::size_t>{6, 5, 4, 3, 2, 1}));
  ASSERT_EQ(res.residual_norms.size(), 6u);
  std::size_t k = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      double want = xT.at(r * 3 + c);
      if (noisy[r]) {
        for (std::size_t t = 1; t <= 6; ++t) want -= sched.alpha(t) * eps[t - 1].at(k * 3 + c);
        EXPECT_NEAR(res.x0.at(r * 3 + c), want, 1e-12);
      } else {
        EXPECT_EQ(res.x0.at(r * 3 + c), want);
      }
    }
    if (noisy[r]) ++k;
  }
}

TEST(Denoise, InjectedNoiseRecoversTheCleanState) {
  Rng rng(15);
  const NoiseSchedule sched(ScheduleKind::linear, 8, 1.0);
  const std::vector<std::uint8_t> noisy{1, 1, 0};
  const Tensor x0 = randn({3, 4}, rng), eps = randn({2, 4}, rng);
  Tensor xT = x0.detach();
  for (std::size_t i = 0; i < 8; ++i) xT.mutable_data()[i] += eps.at(i);
  const auto res = denoise_loop(xT, noisy, sched, [&](const Tensor&, std::size_t) { return eps; });
  EXPECT_LT(test::max_abs_diff(res.x0.data(), x0.data()), 1e-12);
}
