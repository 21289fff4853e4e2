#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "empaste/core.hpp"
#include "empaste/fem.hpp"
#include "empaste/longtail.hpp"
#include "empaste/proposals.hpp"

namespace empaste {

// ---- RLE --------------------------------------------------------------------

// Column-major uncompressed runs, alternating background/foreground and
// starting with background.
struct Rle {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

Rle rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const Rle& rle);  // MalformedRle

// ---- input manifest ---------------------------------------------------------

struct Category {
  ClassId id = 0;
  std::string name;
  std::string supercategory;

  friend bool operator==(const Category&, const Category&) = default;
};

struct ManifestImage {
  std::string image_id;
  std::filesystem::path path;  // resolved
  int width = 0;
  int height = 0;
  std::vector<ClassId> labels;
  std::vector<std::string> segments;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<Category> categories;
  std::vector<ManifestImage> images;
  std::filesystem::path segment_dir;  // resolved
  std::filesystem::path heatmap_dir;  // resolved
  std::filesystem::path features;     // resolved; empty when not referenced
  std::filesystem::path scores;       // resolved; empty when not referenced

  std::filesystem::path segment_path(const std::string& image_id, const std::string& segment_id) const;
  std::filesystem::path heatmap_path(const std::string& image_id, ClassId class_id) const;
  const ManifestImage* find_image(const std::string& image_id) const;
  const Category* find_category(ClassId id) const;
};

// Checks every invariant and every referenced file:
// ParseError, MissingAsset, DuplicateImageId. Segment ids must be unique
// across the whole manifest since the feature and score files key on them.
DatasetManifest read_manifest(const std::filesystem::path& path);

// Paths are written relative to `relative_to`, by default the output file's
// directory.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                    const std::optional<std::filesystem::path>& relative_to = std::nullopt);

// Images holding at least one mask of `subset`, each with only the labels of
// the classes it was sampled for.
DatasetManifest restrict_manifest(const DatasetManifest& manifest, const ClassIndex& subset);

// ---- COCO output ------------------------------------------------------------

struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;

  friend bool operator==(const CocoImage&, const CocoImage&) = default;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  ClassId category_id = 0;
  Rle segmentation;
  std::array<int, 4> bbox{};  // x, y, w, h of the tight pixel bounds
  std::size_t area = 0;
  int iscrowd = 0;

  friend bool operator==(const CocoAnnotation&, const CocoAnnotation&) = default;
};

struct AnnotationSet {
  std::vector<CocoImage> images;
  std::vector<Category> categories;
  std::vector<CocoAnnotation> annotations;

  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

CocoAnnotation make_annotation(std::int64_t id, std::int64_t image_id, ClassId category_id, const BinaryMask& mask);

// Throws InvalidArgument naming the first broken invariant.
void validate_annotation_set(const AnnotationSet& set);

void write_coco(const AnnotationSet& set, const std::filesystem::path& path);
std::string coco_to_string(const AnnotationSet& set);
AnnotationSet read_coco(const std::filesystem::path& path);

// ---- foreground manifest ----------------------------------------------------

struct ForegroundRecord {
  ClassId class_id = 0;
  std::string image_id;
  std::string segment_id;
  double mdist = 0.0;
  double score = 0.0;

  friend bool operator==(const ForegroundRecord&, const ForegroundRecord&) = default;
};

// Ordered by class id, then image id.
std::vector<ForegroundRecord> foreground_records(const std::vector<ForegroundSet>& sets);

void write_foreground_manifest(const std::filesystem::path& path, const std::vector<ForegroundRecord>& records);
std::vector<ForegroundRecord> read_foreground_manifest(const std::filesystem::path& path);

ClassIndex class_index_from(const std::vector<ForegroundRecord>& records);

// Stored in the feature-file format, rows "mu" and "sigma_0".."sigma_{d-1}".
void write_class_model(const std::filesystem::path& path, const ClassModel& model);

}  // namespace empaste
