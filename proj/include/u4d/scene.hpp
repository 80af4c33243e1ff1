#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "u4d/tensor.hpp"
#include "u4d/vocab.hpp"

namespace u4d {

struct SceneConfig {
  int views = 2;
  int times = 2;
  int height = 16;
  int width = 16;
  int channels = 3;
  int min_objects = 1;
  int max_objects = 3;
  // World units travelled between the first and last timestamp.
  double speed = 0.6;

  void validate() const;
};

enum class Motion { left, right, up, down, still };

std::string_view motion_word(Motion m);

struct SceneObject {
  int color = 0;  // palette index
  Motion motion = Motion::still;
  double radius = 0.3;
};

enum class QAKind { motion, start_region, end_region, color };

struct QAPair {
  QAKind kind;
  std::vector<std::int64_t> question;
  std::vector<std::int64_t> answer;
  bool time_sensitive = false;
};

/// A rendered toy scene: spheres resting on a ground plane, seen by V pinhole
/// cameras looking down, at F timestamps.
struct Scene4D {
  SceneConfig cfg;
  Tensor frames;                              // [V, F, H, W, C] in [0, 1]
  std::vector<std::array<double, 7>> poses;   // per view: qw qx qy qz tx ty tz (camera to world)
  std::vector<double> positions;              // [O, F, 3] sphere centres
  std::vector<double> timestamps;             // [F], strictly increasing in [0, 1]
  std::vector<SceneObject> objects;
  std::vector<std::int64_t> caption_tokens;
  std::vector<QAPair> qa_pairs;

  std::size_t num_objects() const { return objects.size(); }
  std::array<double, 3> position(std::size_t obj, std::size_t f) const;
  double pixel(int v, int f, int y, int x, int c) const;
};

bool same_scene(const Scene4D& a, const Scene4D& b);

// Palette entry as RGB in [0, 1].
std::array<double, 3> palette_rgb(int color);
std::string_view color_word(int color);
int palette_size();

Scene4D gen_scene(std::uint64_t seed, const SceneConfig& cfg, const Vocabulary& vocab = Vocabulary::standard());

/// The same scene played backwards: frames and positions reversed along time,
/// motions inverted and language regenerated.
Scene4D time_reversed(const Scene4D& scene, const Vocabulary& vocab = Vocabulary::standard());

// Continuous pixel coordinates (x right, y down; pixel centres at k + 0.5) of a
// world point in view v.
std::array<double, 2> project(const Scene4D& scene, int v, const std::array<double, 3>& world);

// First surface (sphere or ground) hit by the ray through continuous pixel
// coordinates (px, py) of view v at time index f.
std::array<double, 3> surface_point(const Scene4D& scene, int v, int f, double px, double py);

// Peak signal-to-noise ratio in dB for frames in [0, 1]; identical inputs give kPsnrCap.
inline constexpr double kPsnrCap = 99.0;
double psnr(const Tensor& a, const Tensor& b);

// Scene metadata (poses, positions, timestamps, caption, QA) as JSON text.
std::string scene_json(const Scene4D& scene, const Vocabulary& vocab = Vocabulary::standard());

}  // namespace u4d
