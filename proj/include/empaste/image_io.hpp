#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "empaste/core.hpp"

namespace empaste::io {

// 8-bit PNG in, converted to gray (channels = 1) or RGB (channels = 3).
// Alpha is dropped; 16-bit inputs are reduced to their high byte.
RasterImage read_png(const std::filesystem::path& path, int channels = 3);

void write_png(const std::filesystem::path& path, const RasterImage& image);

// Single-channel 16-bit gray PNG.
struct Gray16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> values;
};

Gray16 read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Gray16& image);

// Nonzero gray = foreground.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace empaste::io
