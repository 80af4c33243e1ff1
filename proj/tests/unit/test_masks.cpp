#include <gtest/gtest.h>

#include "u4d/errors.hpp"
#include "u4d/masks.hpp"
#include "u4d/rng.hpp"
#include "../common/mask_rules.hpp"

using namespace u4d;

using test::random_layout;
using test::rule_mask;

namespace {

TokenLayout two_by_two(std::size_t patches) {
  std::vector<Span> spans;
  spans.push_back({TokenRole::linguistic, std::nullopt, std::nullopt, 3});
  spans.push_back({TokenRole::visual_clean, 0, 0, patches});
  for (int v = 0; v < 2; ++v)
    for (int t = 0; t < 2; ++t)
      if (v || t) spans.push_back({TokenRole::visual_noisy, v, t, patches});
  return TokenLayout(spans);
}

}  // namespace

TEST(Masks, BuildersAgreeWithRulesOnRandomLayouts) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const TokenLayout u = random_layout(rng, false);
    const AttentionMask mu = build_understanding_mask(u);
    ASSERT_EQ(mu, rule_mask(u, TaskKind::understanding, MaskLevel::view)) << "layout " << u.key();
    ASSERT_EQ(mu, oracle_mask(u, TaskKind::understanding));
    const TokenLayout g = random_layout(rng, true);
    for (auto level : {MaskLevel::view, MaskLevel::time, MaskLevel::full}) {
      const AttentionMask mg = build_generation_mask(g, level);
      ASSERT_EQ(mg, rule_mask(g, TaskKind::generation, level)) << "layout " << g.key() << " " << to_string(level);
      ASSERT_EQ(mg, oracle_mask(g, TaskKind::generation, level));
      ASSERT_TRUE(mg.every_row_has_key());
    }
  }
}

TEST(Masks, SingleTokenIsAllowed) {
  const TokenLayout l({{TokenRole::linguistic, std::nullopt, std::nullopt, 1}});
  const AttentionMask m = build_understanding_mask(l);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_TRUE(m.allowed(0, 0));
}

TEST(Masks, UnderstandingForbidsNoisyTokens) {
  const TokenLayout l = two_by_two(2);
  EXPECT_THROW(build_understanding_mask(l), ContractError);
}

TEST(Masks, InvalidSpansRejected) {
  EXPECT_THROW(TokenLayout({{TokenRole::visual_clean, std::nullopt, 0, 2}}), ContractError);
  EXPECT_THROW(TokenLayout({{TokenRole::linguistic, 0, 0, 2}}), ContractError);
  EXPECT_THROW(TokenLayout({{TokenRole::linguistic, std::nullopt, std::nullopt, 0}}), ContractError);
  EXPECT_THROW(parse_role("audio"), ConfigError);
}

TEST(Masks, ViewAndTimeLevelsOnAFixedGrid) {
  // noisy frames (0,1), (1,0), (1,1); view-level links equal times, time-level equal views
  const TokenLayout l = two_by_two(1);
  const AttentionMask mv = build_generation_mask(l, MaskLevel::view);
  const AttentionMask mt = build_generation_mask(l, MaskLevel::time);
  const std::size_t n01 = 4, n10 = 5, n11 = 6;
  EXPECT_FALSE(mv.allowed(n01, n10));
  EXPECT_TRUE(mv.allowed(n01, n11));
  EXPECT_TRUE(mv.allowed(n10, 3));
  EXPECT_TRUE(mt.allowed(n10, n11));
  EXPECT_FALSE(mt.allowed(n01, n11));
  // text before visual never sees noisy tokens; clean sees clean and text
  for (std::size_t j = 4; j < 7; ++j) {
    EXPECT_FALSE(mv.allowed(0, j));
    EXPECT_FALSE(mv.allowed(3, j));
  }
  EXPECT_TRUE(mv.allowed(3, 2));
  EXPECT_FALSE(mv.allowed(0, 2));
}

TEST(Masks, AlternatingScheduleStartsAtView) {
  const auto s = alternating_schedule(5, SamplingStrategy::alternating);
  const std::vector<MaskLevel> want{MaskLevel::view, MaskLevel::time, MaskLevel::view, MaskLevel::time,
                                    MaskLevel::view};
  EXPECT_EQ(s, want);
  for (auto l : alternating_schedule(3, SamplingStrategy::view_only)) EXPECT_EQ(l, MaskLevel::view);
  for (auto l : alternating_schedule(3, SamplingStrategy::time_only)) EXPECT_EQ(l, MaskLevel::time);
  for (auto l : alternating_schedule(3, SamplingStrategy::none)) EXPECT_EQ(l, MaskLevel::full);
}

TEST(Masks, CacheReturnsTheSameObjectAndDisabledIsFull) {
  const TokenLayout l = two_by_two(2);
  MaskCache cache;
  const AttentionMask* a = &cache.generation(l, MaskLevel::view);
  EXPECT_EQ(a, &cache.generation(l, MaskLevel::view));
  EXPECT_NE(a, &cache.generation(l, MaskLevel::time));
  EXPECT_EQ(*a, build_generation_mask(l, MaskLevel::view));
  MaskCache off(false);
  const AttentionMask& f = off.generation(l, MaskLevel::view);
  EXPECT_EQ(f.count_allowed(), l.size() * l.size());
}

TEST(Masks, AsciiRendering) {
  const TokenLayout l({{TokenRole::linguistic, std::nullopt, std::nullopt, 3}});
  EXPECT_EQ(render_ascii(build_understanding_mask(l)), "#..\n##.\n###\n");
}
