#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "u4d/masks.hpp"
#include "u4d/tensor.hpp"

namespace u4d {

// [0, 1] -> 0..255 by floor(v * 255.999) after clamping. Only for viewing;
// metrics use the float frames.
std::uint8_t to_u8(double v);

// 8-bit gray (channels = 1) or RGB (channels = 3) pixels, row-major.
void write_png(const std::string& path, std::size_t width, std::size_t height, std::size_t channels,
               const std::vector<std::uint8_t>& pixels);
// Returns the pixels and fills width/height/channels (decodes to gray or RGB).
std::vector<std::uint8_t> read_png(const std::string& path, std::size_t& width, std::size_t& height,
                                   std::size_t& channels);

// One frame (v, f) of [V, F, H, W, C] frames as 8-bit pixels.
std::vector<std::uint8_t> frame_pixels(const Tensor& frames, std::size_t v, std::size_t f);
// Frames tiled V rows by F columns.
void write_frame_grid(const std::string& path, const Tensor& frames);
void write_frame(const std::string& path, const Tensor& frames, std::size_t v, std::size_t f);

// Allowed cells white, blocked black, `cell` pixels per entry.
void write_mask_png(const std::string& path, const AttentionMask& mask, std::size_t cell = 4);

}  // namespace u4d
