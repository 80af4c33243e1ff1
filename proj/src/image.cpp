#include "u4d/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include <png.h>

#include "u4d/errors.hpp"

namespace u4d {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.999)); }

void write_png(const std::string& path, std::size_t width, std::size_t height, std::size_t channels,
               const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw DimensionError("PNG export supports 1 or 3 channels");
  if (pixels.size() != width * height * channels) throw DimensionError("PNG pixel buffer size mismatch");
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw ConfigError("cannot write PNG '" + path + "': " + img.message);
  }
}

std::vector<std::uint8_t> read_png(const std::string& path, std::size_t& width, std::size_t& height,
                                   std::size_t& channels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ConfigError("cannot read PNG '" + path + "': " + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    throw ConfigError("cannot decode PNG '" + path + "': " + img.message);
  }
  width = img.width;
  height = img.height;
  channels = gray ? 1 : 3;
  return px;
}

std::vector<std::uint8_t> frame_pixels(const Tensor& frames, std::size_t v, std::size_t f) {
  if (frames.rank() != 5) throw DimensionError("expected [V, F, H, W, C] frames, got " + shape_str(frames.shape()));
  const auto& s = frames.shape();
  if (v >= s[0] || f >= s[1]) throw DimensionError("frame index out of range");
  const std::size_t n = s[2] * s[3] * s[4];
  const auto src = frames.data().subspan((v * s[1] + f) * n, n);
  std::vector<std::uint8_t> out(n);
  std::transform(src.begin(), src.end(), out.begin(), to_u8);
  return out;
}

void write_frame(const std::string& path, const Tensor& frames, std::size_t v, std::size_t f) {
  const auto& s = frames.shape();
  write_png(path, s[3], s[2], s[4], frame_pixels(frames, v, f));
}

void write_frame_grid(const std::string& path, const Tensor& frames) {
  if (frames.rank() != 5) throw DimensionError("expected [V, F, H, W, C] frames, got " + shape_str(frames.shape()));
  const auto& s = frames.shape();
  const std::size_t V = s[0], F = s[1], H = s[2], W = s[3], C = s[4];
  std::vector<std::uint8_t> grid(V * H * F * W * C);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t f = 0; f < F; ++f) {
      const auto px = frame_pixels(frames, v, f);
      for (std::size_t y = 0; y < H; ++y) {
        std::copy_n(px.begin() + y * W * C, W * C, grid.begin() + ((v * H + y) * F * W + f * W) * C);
      }
    }
  }
  write_png(path, F * W, V * H, C, grid);
}

void write_mask_png(const std::string& path, const AttentionMask& mask, std::size_t cell) {
  const std::size_t n = mask.size(), side = std::max<std::size_t>(1, n * cell);
  std::vector<std::uint8_t> px(side * side, 0);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      if (n > 0 && mask.allowed(y / cell, x / cell)) px[y * side + x] = 255;
    }
  }
  write_png(path, side, side, 1, px);
}

}  // namespace u4d
