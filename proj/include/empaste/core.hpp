#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "empaste/error.hpp"

namespace empaste {

// Pixel centers sit on the integer grid: pixel (x, y) covers
// [x - 0.5, x + 0.5) x [y - 0.5, y + 0.5).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

double distance(Point2 a, Point2 b) noexcept;

struct Circle {
  Point2 center;
  double radius = 0.0;
};

// Inclusive pixel bounds. Empty when width() == 0.
struct PixelBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  int width() const noexcept { return x1 >= x0 ? x1 - x0 + 1 : 0; }
  int height() const noexcept { return y1 >= y0 ? y1 - y0 + 1 : 0; }
  bool empty() const noexcept { return width() == 0 || height() == 0; }

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  // Out-of-raster coordinates read as false.
  bool get(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_ && at(x, y);
  }
  void set(int x, int y, bool value = true) noexcept { bits_[index(x, y)] = value ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::span<std::uint8_t> bits() noexcept { return bits_; }

  std::size_t area() const noexcept;
  PixelBox bounding_box() const noexcept;
  BinaryMask crop(const PixelBox& box) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, std::uint8_t fill = 0);
  RasterImage(int width, int height, int channels, std::vector<std::uint8_t> samples);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }

  std::uint8_t at(int x, int y, int c) const noexcept { return samples_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c) noexcept { return samples_[index(x, y, c)]; }

  std::span<const std::uint8_t> samples() const noexcept { return samples_; }
  std::span<std::uint8_t> samples() noexcept { return samples_; }

  RasterImage crop(const PixelBox& box) const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<std::uint8_t> samples_;
};

struct Transform2 {
  double scale = 1.0;
  double rotation_deg = 0.0;  // normalized into [0, 360) on use
};

Point2 mask_centroid(const BinaryMask& mask);

double mean_pixel_distance(const BinaryMask& mask, Point2 anchor);

// Result of resampling a mask (and optionally its pixels) under a Transform2.
// `origin_x/origin_y` locate pixel (0, 0) of the output raster in the input
// raster's coordinate frame, so placement code can keep track of where the
// pivot went.
struct TransformedMask {
  BinaryMask mask;
  std::optional<RasterImage> pixels;
  int origin_x = 0;
  int origin_y = 0;
};

// Scales and rotates about the mask centroid with nearest-neighbor sampling;
// the output is cropped to the tight bounding box of the transformed shape.
TransformedMask transform_mask_placed(const BinaryMask& mask, const Transform2& t,
                                      const RasterImage* pixels = nullptr);

BinaryMask transform_mask(const BinaryMask& mask, const Transform2& t);

// Exact squared Euclidean distance from every pixel center to the nearest
// false pixel center, where everything outside the raster counts as false.
// False pixels map to 0.
std::vector<double> squared_distance_to_background(const BinaryMask& mask);

}  // namespace empaste
