#include "empaste/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace empaste {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateResult: return "DegenerateResult";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownSegmentId: return "UnknownSegmentId";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::EmptyActivation: return "EmptyActivation";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::PlacementImpossible: return "PlacementImpossible";
    case ErrorCode::NoFreeSpace: return "NoFreeSpace";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::MissingScore: return "MissingScore";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MalformedRle: return "MalformedRle";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingAsset: return "MissingAsset";
    case ErrorCode::DuplicateImageId: return "DuplicateImageId";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

double distance(Point2 a, Point2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative mask extent");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (width < 0 || height < 0 ||
      bits_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorCode::InvalidArgument, "mask bits do not match extent");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::area() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

PixelBox BinaryMask::bounding_box() const noexcept {
  PixelBox box{width_, height_, -1, -1};
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!at(x, y)) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  if (box.x1 < 0) return PixelBox{};
  return box;
}

BinaryMask BinaryMask::crop(const PixelBox& box) const {
  BinaryMask out(box.width(), box.height());
  for (int y = 0; y < box.height(); ++y)
    for (int x = 0; x < box.width(); ++x) out.set(x, y, get(box.x0 + x, box.y0 + y));
  return out;
}

RasterImage::RasterImage(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3))
    throw Error(ErrorCode::InvalidArgument, "bad raster geometry");
  samples_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                      static_cast<std::size_t>(channels),
                  fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3) ||
      samples_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                             static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::InvalidArgument, "raster samples do not match geometry");
  }
}

RasterImage RasterImage::crop(const PixelBox& box) const {
  RasterImage out(box.width(), box.height(), channels_);
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      const int sx = box.x0 + x;
      const int sy = box.y0 + y;
      if (sx < 0 || sy < 0 || sx >= width_ || sy >= height_) continue;
      for (int c = 0; c < channels_; ++c) out.at(x, y, c) = at(sx, sy, c);
    }
  }
  return out;
}

Point2 mask_centroid(const BinaryMask& mask) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "centroid of empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

double mean_pixel_distance(const BinaryMask& mask, Point2 anchor) {
  double total = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      total += std::hypot(x - anchor.x, y - anchor.y);
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "mean distance of empty mask");
  return total / static_cast<double>(n);
}

namespace {

// Exact trig for quarter turns so axis-aligned rotations resample without drift.
void rotation_terms(double degrees, double& cos_t, double& sin_t) {
  double r = std::fmod(degrees, 360.0);
  if (r < 0) r += 360.0;
  if (r == 0.0) { cos_t = 1; sin_t = 0; return; }
  if (r == 90.0) { cos_t = 0; sin_t = 1; return; }
  if (r == 180.0) { cos_t = -1; sin_t = 0; return; }
  if (r == 270.0) { cos_t = 0; sin_t = -1; return; }
  const double rad = r * M_PI / 180.0;
  cos_t = std::cos(rad);
  sin_t = std::sin(rad);
}

int nearest(double v) { return static_cast<int>(std::floor(v + 0.5 + 1e-9)); }

}  // namespace

TransformedMask transform_mask_placed(const BinaryMask& mask, const Transform2& t,
                                      const RasterImage* pixels) {
  if (!(t.scale > 0.0) || !std::isfinite(t.scale))
    throw Error(ErrorCode::InvalidArgument, "transform scale must be positive");
  if (pixels && (pixels->width() != mask.width() || pixels->height() != mask.height()))
    throw Error(ErrorCode::DimensionMismatch, "pixel raster extent differs from mask");

  const Point2 c = mask_centroid(mask);
  const PixelBox src = mask.bounding_box();
  double cos_t = 1;
  double sin_t = 0;
  rotation_terms(t.rotation_deg, cos_t, sin_t);

  // Forward map of the source box corners bounds the output footprint.
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (double cx : {src.x0 - 0.5, src.x1 + 0.5}) {
    for (double cy : {src.y0 - 0.5, src.y1 + 0.5}) {
      const double dx = (cx - c.x) * t.scale;
      const double dy = (cy - c.y) * t.scale;
      const double fx = c.x + cos_t * dx - sin_t * dy;
      const double fy = c.y + sin_t * dx + cos_t * dy;
      min_x = std::min(min_x, fx);
      max_x = std::max(max_x, fx);
      min_y = std::min(min_y, fy);
      max_y = std::max(max_y, fy);
    }
  }
  const int qx0 = static_cast<int>(std::floor(min_x)) - 1;
  const int qy0 = static_cast<int>(std::floor(min_y)) - 1;
  const int qx1 = static_cast<int>(std::ceil(max_x)) + 1;
  const int qy1 = static_cast<int>(std::ceil(max_y)) + 1;
  const int w = qx1 - qx0 + 1;
  const int h = qy1 - qy0 + 1;

  BinaryMask full(w, h);
  std::vector<int> source_index(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), -1);
  const double inv_scale = 1.0 / t.scale;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const double dx = (qx0 + i) - c.x;
      const double dy = (qy0 + j) - c.y;
      // Inverse rotation, then inverse scale.
      const double px = c.x + (cos_t * dx + sin_t * dy) * inv_scale;
      const double py = c.y + (-sin_t * dx + cos_t * dy) * inv_scale;
      const int sx = nearest(px);
      const int sy = nearest(py);
      if (mask.get(sx, sy)) {
        full.set(i, j);
        source_index[static_cast<std::size_t>(j) * static_cast<std::size_t>(w) + static_cast<std::size_t>(i)] =
            sy * mask.width() + sx;
      }
    }
  }

  const PixelBox tight = full.bounding_box();
  if (tight.empty()) throw Error(ErrorCode::DegenerateResult, "transformed mask has zero area");

  TransformedMask out;
  out.mask = full.crop(tight);
  out.origin_x = qx0 + tight.x0;
  out.origin_y = qy0 + tight.y0;
  if (pixels) {
    RasterImage img(tight.width(), tight.height(), pixels->channels());
    for (int j = 0; j < tight.height(); ++j) {
      for (int i = 0; i < tight.width(); ++i) {
        const int idx = source_index[static_cast<std::size_t>(j + tight.y0) * static_cast<std::size_t>(w) +
                                     static_cast<std::size_t>(i + tight.x0)];
        if (idx < 0) continue;
        const int sx = idx % mask.width();
        const int sy = idx / mask.width();
        for (int ch = 0; ch < pixels->channels(); ++ch) img.at(i, j, ch) = pixels->at(sx, sy, ch);
      }
    }
    out.pixels = std::move(img);
  }
  return out;
}

BinaryMask transform_mask(const BinaryMask& mask, const Transform2& t) {
  return transform_mask_placed(mask, t).mask;
}

}  // namespace empaste

namespace empaste {

namespace {

constexpr double kFar = 1e20;

// 1-D lower envelope of parabolas; f and d have length n.
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -kFar * 10;
  z[1] = kFar * 10;
  for (int q = 1; q < n; ++q) {
    double s = 0;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kFar * 10;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[q] = double(q - p) * (q - p) + f[p];
  }
}

}  // namespace

std::vector<double> squared_distance_to_background(const BinaryMask& mask) {
  // Work on a grid padded by one false pixel on every side.
  const int w = mask.width() + 2;
  const int h = mask.height() + 2;
  std::vector<double> grid(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) grid[static_cast<std::size_t>(y + 1) * w + (x + 1)] = kFar;

  std::vector<int> v;
  std::vector<double> z;
  const int n = std::max(w, h);
  std::vector<double> f(static_cast<std::size_t>(n));
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f.data(), d.data(), h, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * w;
    std::copy(row, row + w, f.begin());
    edt_1d(f.data(), d.data(), w, v, z);
    std::copy(d.begin(), d.begin() + w, row);
  }

  std::vector<double> out(mask.size());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      out[static_cast<std::size_t>(y) * mask.width() + x] = grid[static_cast<std::size_t>(y + 1) * w + (x + 1)];
  return out;
}

}  // namespace empaste
