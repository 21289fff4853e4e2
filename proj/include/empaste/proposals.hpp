#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "empaste/core.hpp"

namespace empaste {

using ClassId = int;

struct LatentFeature {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
};

// One region proposal. The mask is cropped to its bounding box and placed in
// image coordinates by (offset_x, offset_y).
struct SegmentRecord {
  std::string image_id;
  std::string segment_id;
  BinaryMask mask;
  int offset_x = 0;
  int offset_y = 0;
  std::optional<LatentFeature> feature;
  std::map<ClassId, double> class_scores;

  // Mask expressed in image coordinates (pixel centers shifted by the offset).
  BinaryMask image_mask(int image_width, int image_height) const;
  Point2 to_image(Point2 local) const noexcept { return {local.x + offset_x, local.y + offset_y}; }
};

// Builds a record from a full-image mask, cropping to the tight bounding box.
SegmentRecord make_segment(std::string image_id, std::string segment_id, const BinaryMask& full_mask);

struct CamHeatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // clipped to [0, 1]

  double at(int x, int y) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
};

CamHeatmap load_heatmap(const std::filesystem::path& path);

struct ImageDims {
  int width = 0;
  int height = 0;
};

inline constexpr double kDefaultMinAreaFrac = 0.01;
inline constexpr double kDefaultMaxExtentFrac = 0.97;
inline constexpr int kDefaultErosionRadius = 1;
inline constexpr std::uint8_t kDefaultPadValue = 128;

std::vector<SegmentRecord> filter_segments(std::vector<SegmentRecord> segments, ImageDims dims,
                                           double min_area_frac = kDefaultMinAreaFrac,
                                           double max_extent_frac = kDefaultMaxExtentFrac);

// Erosion with a disc of Euclidean radius `radius`; pixels outside the raster
// count as background. Throws DegenerateResult if nothing survives.
BinaryMask erode_mask(const BinaryMask& mask, int radius);

// Square crop of the segment's bounding box; non-segment pixels and padding
// are set to `pad_value`.
RasterImage prepare_classifier_crop(const RasterImage& image, const SegmentRecord& segment,
                                    std::uint8_t pad_value = kDefaultPadValue);

// Feature table as stored on disk: row i belongs to segment_ids[i].
struct FeatureTable {
  std::size_t dim = 0;
  std::vector<std::string> segment_ids;
  std::vector<float> values;  // row-major, segment_ids.size() x dim

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

FeatureTable read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureTable& table);
std::filesystem::path feature_index_path(const std::filesystem::path& feature_path);

struct ScoreEntry {
  std::string segment_id;
  ClassId class_id = 0;
  double probability = 0.0;
};

std::vector<ScoreEntry> read_score_file(const std::filesystem::path& path);
void write_score_file(const std::filesystem::path& path, const std::vector<ScoreEntry>& scores);

struct IngestReport {
  std::vector<std::string> missing_feature;
  std::vector<std::string> missing_scores;

  bool complete() const noexcept { return missing_feature.empty() && missing_scores.empty(); }
};

// Attaches features and scores to segments. Segments without assets stay in
// the output (feature unset) and are listed in `report`.
std::vector<SegmentRecord> ingest_segment_assets(std::vector<SegmentRecord> segments, const FeatureTable& features,
                                                 const std::vector<ScoreEntry>& scores,
                                                 IngestReport* report = nullptr);

}  // namespace empaste
