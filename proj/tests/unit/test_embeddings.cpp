#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "u4d/embeddings.hpp"
#include "u4d/errors.hpp"
#include "u4d/ops.hpp"

using namespace u4d;
using test::randn;

TEST(Schedule, SumsToSigmaTotal) {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    for (std::size_t T : {1u, 8u, 32u}) {
      const NoiseSchedule s(kind, T, 1.7);
      double acc = 0.0;
      for (std::size_t t = 1; t <= T; ++t) {
        EXPECT_GT(s.alpha(t), 0.0);
        acc += s.alpha(t);
        EXPECT_NEAR(s.level(t), acc, 1e-12);
      }
      EXPECT_NEAR(acc, 1.7, 1e-12);
    }
  }
}

TEST(Schedule, LinearIsProportionalToStep) {
  const NoiseSchedule s(ScheduleKind::linear, 4, 1.0);
  for (std::size_t t = 1; t <= 4; ++t) EXPECT_NEAR(s.alpha(t), t / 10.0, 1e-15);
  EXPECT_THROW(s.alpha(0), ContractError);
  EXPECT_THROW(s.alpha(5), ContractError);
}

TEST(Patchify, RoundTripIsExact) {
  Rng rng(9);
  const FrameDims dims{2, 3, 8, 12, 3, 4};
  const Tensor frames = randn({2, 3, 8, 12, 3}, rng);
  const Tensor p = patchify(frames, dims);
  EXPECT_EQ(p.shape(), (Shape{2 * 3 * 6, 48}));
  EXPECT_TRUE(test::bit_equal(unpatchify(p, dims).data(), frames.data()));
}

TEST(Patchify, PatchThatDoesNotDivideIsRejected) {
  const FrameDims dims{1, 1, 10, 10, 3, 4};
  EXPECT_THROW(patchify(Tensor({1, 1, 10, 10, 3}), dims), ConfigError);
}

TEST(NoiseEmbed, CleanRowsAreExactlyTheProjection) {
  Rng rng(4);
  const Tensor z = randn({6, 5}, rng), w = randn({5, 7}, rng), eps = randn({6, 7}, rng);
  const Tensor clean = matmul(z, w);
  const Tensor f = noise_embed(z, w, {0, 0, 0, 0, 0, 0}, 0.8, eps);
  EXPECT_TRUE(test::bit_equal(f.data(), clean.data()));
  const Tensor g = noise_embed(z, w, {0, 1, 0, 1, 0, 0}, 0.8, eps);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      const double want = clean.at(r * 7 + c) + (r == 1 || r == 3 ? 0.8 * eps.at(r * 7 + c) : 0.0);
      EXPECT_NEAR(g.at(r * 7 + c), want, 1e-15);
    }
  }
  EXPECT_THROW(noise_embed(z, w, {0, 0.5, 0, 0, 0, 0}, 0.8, eps), ContractError);
}

TEST(Fourier, MatchesClosedForm) {
  const Tensor freqs = initial_frequencies(3);
  EXPECT_EQ(freqs.at(0), 1.0);
  EXPECT_EQ(freqs.at(2), 4.0);
  const Tensor f = fourier_time({0.0, 0.3}, freqs);
  ASSERT_EQ(f.shape(), (Shape{2, 6}));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(f.at(6 + k), std::sin(2 * std::numbers::pi * freqs.at(k) * 0.3), 1e-15);
    EXPECT_NEAR(f.at(6 + 3 + k), std::cos(2 * std::numbers::pi * freqs.at(k) * 0.3), 1e-15);
    EXPECT_EQ(f.at(3 + k), 1.0);
  }
}

namespace {

struct GeoFixture {
  FrameDims dims{2, 2, 8, 8, 3, 4};
  GeometricLatent geo;
  Tensor freqs = initial_frequencies(2), w4d, b4d;
  std::vector<double> times{0.0, 1.0 / 3.0};

  GeoFixture() {
    Rng rng(6);
    geo.z_pose = randn({2, 5}, rng);
    geo.z_posi = randn({dims.tokens(), 5}, rng);
    w4d = randn({5 + 4, 6}, rng);
    b4d = randn({6}, rng);
  }
};

Tensor slice_rows_for_test(const Tensor& w, std::size_t rows) {
  const std::size_t c = w.dim(1);
  return Tensor({rows, c}, std::vector<double>(w.data().begin(), w.data().begin() + rows * c));
}

}  // namespace

TEST(Spatiotemporal, SpatialModeDropsTimeAndNoneDropsEverything) {
  GeoFixture g;
  const auto full = spatiotemporal_embed(g.geo, g.dims, g.times, g.freqs, g.w4d, g.b4d, EmbeddingMode::spatiotemporal);
  const auto spatial = spatiotemporal_embed(g.geo, g.dims, g.times, g.freqs, g.w4d, g.b4d, EmbeddingMode::spatial);
  const auto none = spatiotemporal_embed(g.geo, g.dims, g.times, g.freqs, g.w4d, g.b4d, EmbeddingMode::none);
  ASSERT_EQ(full.pose.shape(), (Shape{4, 6}));
  ASSERT_EQ(full.posi.shape(), (Shape{16, 6}));
  // spatial: W [z || 0] + b, so the two timestamps of one view share a pose row
  const Tensor want = linear(g.geo.z_pose, slice_rows_for_test(g.w4d, 5), g.b4d);
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_NEAR(spatial.pose.at(0 * 6 + c), want.at(c), 1e-12);
    EXPECT_NEAR(spatial.pose.at(1 * 6 + c), want.at(c), 1e-12);
  }
  // full: the time block separates the two timestamps
  double gap = 0.0;
  for (std::size_t c = 0; c < 6; ++c) gap += std::abs(full.pose.at(c) - full.pose.at(6 + c));
  EXPECT_GT(gap, 1e-6);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(none.posi.at(r * 6 + c), g.b4d.at(c));
}

TEST(DecodeVisual, ClampsIntoUnitRange) {
  const FrameDims dims{1, 1, 4, 4, 3, 4};
  Tensor tokens({1, 2}, {5.0, -5.0});
  Tensor w({2, 48}, 1.0);
  Tensor b({1, 48}, 0.0);
  const Tensor frames = decode_visual(tokens, w, b, dims);
  for (double v : frames.data()) EXPECT_EQ(v, 0.0);
  const Tensor bright = decode_visual(Tensor({1, 2}, {5.0, 0.0}), w, b, dims);
  for (double v : bright.data()) EXPECT_EQ(v, 1.0);
}
