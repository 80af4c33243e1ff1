#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "u4d/data.hpp"
#include "u4d/errors.hpp"
#include "u4d/scene.hpp"
#include "u4d/vocab.hpp"

using namespace u4d;

TEST(Scene, SameSeedSameScene) {
  SceneConfig cfg;
  const Scene4D a = gen_scene(11, cfg), b = gen_scene(11, cfg), c = gen_scene(12, cfg);
  EXPECT_TRUE(same_scene(a, b));
  EXPECT_TRUE(test::bit_equal(a.frames.data(), b.frames.data()));
  EXPECT_FALSE(same_scene(a, c));
}

TEST(Scene, FramesShapeAndRange) {
  SceneConfig cfg;
  cfg.views = 3;
  cfg.times = 4;
  const Scene4D s = gen_scene(1, cfg);
  EXPECT_EQ(s.frames.shape(), (Shape{3, 4, 16, 16, 3}));
  for (double v : s.frames.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  ASSERT_EQ(s.timestamps.size(), 4u);
  for (std::size_t f = 1; f < 4; ++f) EXPECT_GT(s.timestamps[f], s.timestamps[f - 1]);
  EXPECT_GE(s.num_objects(), 1u);
  EXPECT_LE(s.num_objects(), 3u);
}

TEST(Scene, InvalidConfigRejected) {
  SceneConfig cfg;
  cfg.min_objects = 4;
  cfg.max_objects = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SceneConfig{};
  cfg.times = 0;
  EXPECT_THROW(gen_scene(0, cfg), ConfigError);
}

TEST(Scene, SurfacePointProjectsBackToItsPixel) {
  SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene4D s = gen_scene(seed, cfg);
    for (int v = 0; v < cfg.views; ++v) {
      for (double px : {2.5, 7.5, 13.0}) {
        for (double py : {1.5, 8.0, 14.5}) {
          const auto w = surface_point(s, v, 0, px, py);
          const auto uv = project(s, v, w);
          EXPECT_NEAR(uv[0], px, 1e-9);
          EXPECT_NEAR(uv[1], py, 1e-9);
        }
      }
    }
  }
}

TEST(Scene, TimeReversalIsAnInvolutionOnFrames) {
  SceneConfig cfg;
  const Scene4D s = gen_scene(4, cfg);
  const Scene4D r = time_reversed(s);
  const Scene4D rr = time_reversed(r);
  EXPECT_TRUE(test::bit_equal(s.frames.data(), rr.frames.data()));
  for (int v = 0; v < cfg.views; ++v) {
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        EXPECT_EQ(r.pixel(v, 0, y, x, 0), s.pixel(v, cfg.times - 1, y, x, 0));
      }
    }
  }
}

TEST(Scene, PsnrCapAndKnownValue) {
  Tensor a({4}, {0.0, 0.5, 1.0, 0.25});
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  Tensor b({4}, {0.1, 0.6, 0.9, 0.35});  // mse 0.01 -> 20 dB
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Vocabulary, TokenizeRoundTripAndUnknownWord) {
  const Vocabulary& v = Vocabulary::standard();
  EXPECT_LE(v.size(), 256u);
  const auto ids = v.tokenize("red ball moves left");
  EXPECT_EQ(v.detokenize(ids), "red ball moves left");
  EXPECT_THROW(v.tokenize("red zeppelin"), ContractError);
}

TEST(Data, UnderstandingExampleLayout) {
  SceneConfig cfg;
  const Scene4D s = gen_scene(2, cfg);
  ExampleSpec spec;
  const TrainingExample ex = make_batch(s, TaskKind::understanding, Vocabulary::standard(), spec);
  EXPECT_EQ(ex.num_visual(), 2u * 2u * 16u);
  EXPECT_EQ(ex.num_noisy(), 0u);
  EXPECT_EQ(ex.layout.size(), ex.num_visual() + ex.text_ids.size());
  EXPECT_FALSE(ex.layout.has_role(TokenRole::visual_noisy));
  // targets are the next input token from the separator on, ending in EOS
  std::size_t predicted = 0;
  for (std::size_t i = 0; i < ex.targets.size(); ++i) {
    if (ex.targets[i] < 0) continue;
    EXPECT_GE(i + 1, ex.prompt_len);
    const std::int64_t next = i + 1 < ex.text_ids.size() ? ex.text_ids[i + 1] : Vocabulary::kEos;
    EXPECT_EQ(ex.targets[i], next);
    ++predicted;
  }
  EXPECT_EQ(predicted, ex.answer.size());
  EXPECT_EQ(ex.answer.back(), Vocabulary::kEos);
}

TEST(Data, GenerationExampleMarksTargetFrames) {
  SceneConfig cfg;
  const Scene4D s = gen_scene(2, cfg);
  ExampleSpec spec;
  spec.num_condition = 1;
  const TrainingExample ex = make_batch(s, TaskKind::generation, Vocabulary::standard(), spec);
  ASSERT_EQ(ex.noisy.size(), 64u);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(ex.noisy[i], i >= 16 ? 1 : 0);
  EXPECT_TRUE(ex.layout.has_role(TokenRole::visual_noisy));
  EXPECT_TRUE(ex.layout.has_role(TokenRole::visual_clean));
}
