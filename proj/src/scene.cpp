#include "u4d/scene.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <json.hpp>

#include "u4d/errors.hpp"
#include "u4d/rng.hpp"

namespace u4d {

namespace {

constexpr double kCameraHeight = 2.5;
constexpr double kHalfExtent = 1.25;  // ground half-width seen by view 0
constexpr double kArena = 0.8;        // sphere centres stay within this radius
constexpr double kBackground = 0.1;

struct Rgb {
  const char* word;
  double r, g, b;
};

constexpr Rgb kPalette[] = {
    {"red", 0.95, 0.15, 0.15},   {"green", 0.15, 0.85, 0.2},  {"blue", 0.2, 0.3, 0.95},
    {"yellow", 0.95, 0.9, 0.15}, {"cyan", 0.1, 0.9, 0.9},     {"magenta", 0.9, 0.2, 0.85},
    {"orange", 1.0, 0.55, 0.1},  {"white", 0.95, 0.95, 0.95},
};

struct Camera {
  Eigen::Matrix3d r;  // camera axes as columns, world frame
  Eigen::Vector3d c;
  double fx, fy, cx, cy;
};

Camera camera(const Scene4D& s, int v) {
  const auto& p = s.poses.at(static_cast<std::size_t>(v));
  Eigen::Quaterniond q(p[0], p[1], p[2], p[3]);
  Camera cam;
  cam.r = q.toRotationMatrix();
  cam.c = Eigen::Vector3d(p[4], p[5], p[6]);
  cam.fx = 0.5 * s.cfg.width * kCameraHeight / kHalfExtent;
  cam.fy = 0.5 * s.cfg.height * kCameraHeight / kHalfExtent;
  cam.cx = 0.5 * s.cfg.width;
  cam.cy = 0.5 * s.cfg.height;
  return cam;
}

std::array<double, 7> make_pose(int v) {
  Eigen::Matrix3d look_down;
  look_down << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const double theta = v * std::numbers::pi / 6.0;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix() * look_down;
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z(), 0.1 * v, 0.0, kCameraHeight};
}

Eigen::Vector2d direction(Motion m) {
  switch (m) {
    case Motion::left: return {-1, 0};
    case Motion::right: return {1, 0};
    case Motion::up: return {0, 1};
    case Motion::down: return {0, -1};
    case Motion::still: return {0, 0};
  }
  return {0, 0};
}

Motion inverse(Motion m) {
  switch (m) {
    case Motion::left: return Motion::right;
    case Motion::right: return Motion::left;
    case Motion::up: return Motion::down;
    case Motion::down: return Motion::up;
    case Motion::still: return Motion::still;
  }
  return m;
}

std::string_view region_word(double x, double y) {
  if (std::max(std::abs(x), std::abs(y)) < 0.25) return "center";
  if (std::abs(x) >= std::abs(y)) return x < 0 ? "left" : "right";
  return y > 0 ? "top" : "bottom";
}

// Nearest hit along the ray; returns object index or -1 for the ground.
int cast(const Scene4D& s, int f, const Eigen::Vector3d& o, const Eigen::Vector3d& d, Eigen::Vector3d& hit) {
  double best = std::numeric_limits<double>::infinity();
  int who = -1;
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const auto pc = s.position(k, static_cast<std::size_t>(f));
    const Eigen::Vector3d oc = o - Eigen::Vector3d(pc[0], pc[1], pc[2]);
    const double a = d.squaredNorm();
    const double b = 2.0 * oc.dot(d);
    const double c = oc.squaredNorm() - s.objects[k].radius * s.objects[k].radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) continue;
    const double t = (-b - std::sqrt(disc)) / (2 * a);
    if (t > 0 && t < best) {
      best = t;
      who = static_cast<int>(k);
    }
  }
  if (who < 0) best = -o.z() / d.z();
  hit = o + best * d;
  return who;
}

Eigen::Vector3d ray_dir(const Camera& cam, double px, double py) {
  return cam.r * Eigen::Vector3d((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
}

void render(Scene4D& s) {
  const auto& c = s.cfg;
  std::vector<double> px(static_cast<std::size_t>(c.views * c.times * c.height * c.width * c.channels));
  std::size_t at = 0;
  for (int v = 0; v < c.views; ++v) {
    const Camera cam = camera(s, v);
    for (int f = 0; f < c.times; ++f) {
      for (int y = 0; y < c.height; ++y) {
        for (int x = 0; x < c.width; ++x) {
          Eigen::Vector3d hit;
          const int who = cast(s, f, cam.c, ray_dir(cam, x + 0.5, y + 0.5), hit);
          std::array<double, 3> rgb{kBackground, kBackground, kBackground};
          if (who >= 0) rgb = palette_rgb(s.objects[static_cast<std::size_t>(who)].color);
          if (c.channels == 3) {
            for (int ch = 0; ch < 3; ++ch) px[at++] = rgb[static_cast<std::size_t>(ch)];
          } else {
            px[at++] = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
          }
        }
      }
    }
  }
  s.frames = Tensor({static_cast<std::size_t>(c.views), static_cast<std::size_t>(c.times),
                     static_cast<std::size_t>(c.height), static_cast<std::size_t>(c.width),
                     static_cast<std::size_t>(c.channels)},
                    std::move(px));
}

void describe(Scene4D& s, const Vocabulary& vocab) {
  std::string caption;
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const auto& o = s.objects[k];
    if (k) caption += " and ";
    caption += std::string(color_word(o.color)) + " ball ";
    caption += o.motion == Motion::still ? "is static" : "moves " + std::string(motion_word(o.motion));
  }
  s.caption_tokens = vocab.tokenize(caption);

  s.qa_pairs.clear();
  const std::size_t last = s.timestamps.size() - 1;
  auto ask = [&](QAKind kind, const std::string& q, std::string_view a, bool ts) {
    s.qa_pairs.push_back({kind, vocab.tokenize(q), vocab.tokenize(a), ts});
  };
  for (const auto& o : s.objects) {
    ask(QAKind::motion, "how does the " + std::string(color_word(o.color)) + " ball move",
        o.motion == Motion::still ? "static" : motion_word(o.motion), true);
  }
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const auto p = s.position(k, 0);
    ask(QAKind::start_region, "where is the " + std::string(color_word(s.objects[k].color)) + " ball at the start",
        region_word(p[0], p[1]), true);
  }
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const auto p = s.position(k, last);
    ask(QAKind::end_region, "where is the " + std::string(color_word(s.objects[k].color)) + " ball at the end",
        region_word(p[0], p[1]), true);
  }
  for (const auto& o : s.objects) {
    if (o.motion == Motion::still) continue;
    const auto same = std::count_if(s.objects.begin(), s.objects.end(),
                                    [&](const SceneObject& x) { return x.motion == o.motion; });
    if (same != 1) continue;
    ask(QAKind::color, "what color is the ball that moves " + std::string(motion_word(o.motion)),
        color_word(o.color), false);
  }
}

}  // namespace

void SceneConfig::validate() const {
  if (views < 1) throw ConfigError("data.views must be >= 1");
  if (times < 2) throw ConfigError("data.times must be >= 2");
  if (height < 4 || width < 4) throw ConfigError("data.height and data.width must be >= 4");
  if (channels != 1 && channels != 3) throw ConfigError("data.channels must be 1 or 3");
  if (min_objects < 1 || max_objects < min_objects || max_objects > 3) {
    throw ConfigError("object counts must satisfy 1 <= min_objects <= max_objects <= 3");
  }
  if (!(speed >= 0.0) || speed > 1.2) throw ConfigError("data.speed must lie in [0, 1.2]");
}

std::string_view motion_word(Motion m) {
  switch (m) {
    case Motion::left: return "left";
    case Motion::right: return "right";
    case Motion::up: return "up";
    case Motion::down: return "down";
    case Motion::still: return "static";
  }
  return "?";
}

std::array<double, 3> palette_rgb(int color) {
  const auto& p = kPalette[color];
  return {p.r, p.g, p.b};
}

std::string_view color_word(int color) { return kPalette[color].word; }

int palette_size() { return static_cast<int>(std::size(kPalette)); }

std::array<double, 3> Scene4D::position(std::size_t obj, std::size_t f) const {
  const std::size_t i = (obj * timestamps.size() + f) * 3;
  return {positions[i], positions[i + 1], positions[i + 2]};
}

double Scene4D::pixel(int v, int f, int y, int x, int c) const {
  const std::size_t i =
      (((static_cast<std::size_t>(v) * cfg.times + f) * cfg.height + y) * cfg.width + x) * cfg.channels + c;
  return frames.data()[i];
}

bool same_scene(const Scene4D& a, const Scene4D& b) {
  auto eq = [](const Tensor& x, const Tensor& y) {
    return x.shape() == y.shape() && std::equal(x.data().begin(), x.data().end(), y.data().begin());
  };
  if (!eq(a.frames, b.frames) || a.poses != b.poses || a.positions != b.positions ||
      a.timestamps != b.timestamps || a.caption_tokens != b.caption_tokens ||
      a.qa_pairs.size() != b.qa_pairs.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.qa_pairs.size(); ++i) {
    if (a.qa_pairs[i].question != b.qa_pairs[i].question || a.qa_pairs[i].answer != b.qa_pairs[i].answer) {
      return false;
    }
  }
  return true;
}

Scene4D gen_scene(std::uint64_t seed, const SceneConfig& cfg, const Vocabulary& vocab) {
  cfg.validate();
  Rng rng = Rng::derive(seed, 0x5ce9e);
  Scene4D s;
  s.cfg = cfg;
  for (int f = 0; f < cfg.times; ++f) s.timestamps.push_back(static_cast<double>(f) / (cfg.times - 1));
  for (int v = 0; v < cfg.views; ++v) s.poses.push_back(make_pose(v));

  const int n = cfg.min_objects + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
  std::vector<int> colors(static_cast<std::size_t>(palette_size()));
  for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = static_cast<int>(i);
  for (std::size_t i = colors.size() - 1; i > 0; --i) std::swap(colors[i], colors[rng.below(i + 1)]);

  constexpr double kRadius = 0.3;
  std::vector<Eigen::Vector2d> starts, ends;
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("could not place objects; lower data.speed");
      const Motion m = cfg.speed == 0.0 ? Motion::still : static_cast<Motion>(rng.below(5));
      const Eigen::Vector2d p0(rng.uniform(-kArena, kArena), rng.uniform(-kArena, kArena));
      const Eigen::Vector2d p1 = p0 + cfg.speed * direction(m);
      if (p0.norm() > kArena || p1.norm() > kArena) continue;
      bool clear = true;
      for (std::size_t j = 0; j < starts.size() && clear; ++j) {
        for (int f = 0; f < cfg.times; ++f) {
          const double t = s.timestamps[static_cast<std::size_t>(f)];
          const Eigen::Vector2d a = p0 + t * (p1 - p0);
          const Eigen::Vector2d b = starts[j] + t * (ends[j] - starts[j]);
          if ((a - b).norm() < 2.6 * kRadius) clear = false;
        }
      }
      if (!clear) continue;
      starts.push_back(p0);
      ends.push_back(p1);
      s.objects.push_back({colors[static_cast<std::size_t>(k)], m, kRadius});
      break;
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int f = 0; f < cfg.times; ++f) {
      const double t = s.timestamps[static_cast<std::size_t>(f)];
      const Eigen::Vector2d p = starts[k] + t * (ends[k] - starts[k]);
      s.positions.insert(s.positions.end(), {p.x(), p.y(), kRadius});
    }
  }
  render(s);
  describe(s, vocab);
  return s;
}

Scene4D time_reversed(const Scene4D& scene, const Vocabulary& vocab) {
  Scene4D s = scene;
  const auto& c = scene.cfg;
  const std::size_t frame = static_cast<std::size_t>(c.height * c.width * c.channels);
  std::vector<double> px(scene.frames.numel());
  const auto src = scene.frames.data();
  for (int v = 0; v < c.views; ++v) {
    for (int f = 0; f < c.times; ++f) {
      const std::size_t from = (static_cast<std::size_t>(v) * c.times + f) * frame;
      const std::size_t to = (static_cast<std::size_t>(v) * c.times + (c.times - 1 - f)) * frame;
      std::copy(src.begin() + from, src.begin() + from + frame, px.begin() + to);
    }
  }
  s.frames = Tensor(scene.frames.shape(), std::move(px));
  const std::size_t F = scene.timestamps.size();
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    for (std::size_t f = 0; f < F; ++f) {
      const auto p = scene.position(k, F - 1 - f);
      std::copy(p.begin(), p.end(), s.positions.begin() + (k * F + f) * 3);
    }
    s.objects[k].motion = inverse(scene.objects[k].motion);
  }
  describe(s, vocab);
  return s;
}

std::array<double, 2> project(const Scene4D& scene, int v, const std::array<double, 3>& world) {
  const Camera cam = camera(scene, v);
  const Eigen::Vector3d pc = cam.r.transpose() * (Eigen::Vector3d(world[0], world[1], world[2]) - cam.c);
  return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

std::array<double, 3> surface_point(const Scene4D& scene, int v, int f, double px, double py) {
  const Camera cam = camera(scene, v);
  Eigen::Vector3d hit;
  cast(scene, f, cam.c, ray_dir(cam, px, py), hit);
  return {hit.x(), hit.y(), hit.z()};
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("psnr: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
  const auto av = a.data();
  const auto bv = b.data();
  double se = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) se += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double mse = se / static_cast<double>(av.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::string scene_json(const Scene4D& s, const Vocabulary& vocab) {
  nlohmann::json j;
  j["views"] = s.cfg.views;
  j["times"] = s.cfg.times;
  j["height"] = s.cfg.height;
  j["width"] = s.cfg.width;
  j["poses"] = s.poses;
  j["timestamps"] = s.timestamps;
  auto& objs = j["objects"] = nlohmann::json::array();
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    nlohmann::json o;
    o["color"] = color_word(s.objects[k].color);
    o["motion"] = motion_word(s.objects[k].motion);
    o["radius"] = s.objects[k].radius;
    for (std::size_t f = 0; f < s.timestamps.size(); ++f) o["positions"].push_back(s.position(k, f));
    objs.push_back(o);
  }
  j["caption"] = vocab.detokenize(s.caption_tokens);
  for (const auto& qa : s.qa_pairs) {
    j["qa"].push_back({{"question", vocab.detokenize(qa.question)}, {"answer", vocab.detokenize(qa.answer)}});
  }
  return j.dump(2);
}

}  // namespace u4d
