#include "empaste/proposals.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "empaste/image_io.hpp"
#include "empaste/text.hpp"

namespace empaste {

BinaryMask SegmentRecord::image_mask(int image_width, int image_height) const {
  BinaryMask out(image_width, image_height);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const int ix = x + offset_x;
      const int iy = y + offset_y;
      if (mask.at(x, y) && ix >= 0 && iy >= 0 && ix < image_width && iy < image_height) out.set(ix, iy);
    }
  }
  return out;
}

SegmentRecord make_segment(std::string image_id, std::string segment_id, const BinaryMask& full_mask) {
  const PixelBox box = full_mask.bounding_box();
  if (box.empty()) throw Error(ErrorCode::EmptyMask, "segment " + segment_id + " is empty");
  SegmentRecord rec;
  rec.image_id = std::move(image_id);
  rec.segment_id = std::move(segment_id);
  rec.mask = full_mask.crop(box);
  rec.offset_x = box.x0;
  rec.offset_y = box.y0;
  return rec;
}

CamHeatmap load_heatmap(const std::filesystem::path& path) {
  io::Gray16 raw = io::read_png16(path);
  CamHeatmap out{raw.width, raw.height, {}};
  out.values.resize(raw.values.size());
  for (std::size_t i = 0; i < raw.values.size(); ++i) out.values[i] = raw.values[i] / 65535.0;
  return out;
}

std::vector<SegmentRecord> filter_segments(std::vector<SegmentRecord> segments, ImageDims dims,
                                           double min_area_frac, double max_extent_frac) {
  if (!(min_area_frac > 0.0 && min_area_frac < max_extent_frac && max_extent_frac <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "need 0 < min_area_frac < max_extent_frac <= 1");
  const double image_area = static_cast<double>(dims.width) * dims.height;
  std::vector<SegmentRecord> kept;
  kept.reserve(segments.size());
  for (auto& seg : segments) {
    const double area = static_cast<double>(seg.mask.area());
    if (area < min_area_frac * image_area) continue;
    const PixelBox box = seg.mask.bounding_box();
    if (box.width() >= max_extent_frac * dims.width || box.height() >= max_extent_frac * dims.height) continue;
    kept.push_back(std::move(seg));
  }
  return kept;
}

BinaryMask erode_mask(const BinaryMask& mask, int radius) {
  if (radius < 0) throw Error(ErrorCode::InvalidArgument, "erosion radius must be >= 0");
  if (radius == 0) return mask;
  const std::vector<double> d2 = squared_distance_to_background(mask);
  const double r2 = static_cast<double>(radius) * radius;
  BinaryMask out(mask.width(), mask.height());
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      // Survives iff no background pixel lies within the closed disc.
      if (d2[static_cast<std::size_t>(y) * mask.width() + x] > r2) {
        out.set(x, y);
        ++n;
      }
    }
  }
  if (n == 0) throw Error(ErrorCode::DegenerateResult, "erosion removed every pixel");
  return out;
}

RasterImage prepare_classifier_crop(const RasterImage& image, const SegmentRecord& segment, std::uint8_t pad_value) {
  const PixelBox box = segment.mask.bounding_box();
  if (box.empty()) throw Error(ErrorCode::EmptyMask, "segment " + segment.segment_id + " is empty");
  const int side = std::max(box.width(), box.height());
  const int pad_x = (side - box.width()) / 2;
  const int pad_y = (side - box.height()) / 2;
  RasterImage out(side, side, image.channels(), pad_value);
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      const int mx = box.x0 + x;
      const int my = box.y0 + y;
      if (!segment.mask.at(mx, my)) continue;
      const int ix = mx + segment.offset_x;
      const int iy = my + segment.offset_y;
      if (ix < 0 || iy < 0 || ix >= image.width() || iy >= image.height())
        throw Error(ErrorCode::DimensionMismatch, "segment " + segment.segment_id + " exceeds its image");
      for (int c = 0; c < image.channels(); ++c) out.at(x + pad_x, y + pad_y, c) = image.at(ix, iy, c);
    }
  }
  return out;
}

// ---- feature file ---------------------------------------------------------

namespace {

constexpr std::string_view kFeatureMagic = "EMPASTE-FEATURES 1";

}  // namespace

std::filesystem::path feature_index_path(const std::filesystem::path& feature_path) {
  std::filesystem::path p = feature_path;
  p += ".index";
  return p;
}

FeatureTable read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kFeatureMagic)
    throw Error(ErrorCode::MalformedFile, path.string() + ": missing feature-file header");

  std::unordered_map<std::string, std::string> header;
  while (true) {
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedFile, path.string() + ": unterminated header");
    const std::string_view t = text::trim(line);
    if (t == "end") break;
    const auto sp = t.find(' ');
    if (sp == std::string_view::npos) throw Error(ErrorCode::MalformedFile, path.string() + ": bad header line");
    header[std::string(t.substr(0, sp))] = std::string(text::trim(t.substr(sp + 1)));
  }
  auto require = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw Error(ErrorCode::MalformedFile, path.string() + ": header lacks " + key);
    return it->second;
  };
  if (require("byte_order") != "little-endian" || require("element") != "float32")
    throw Error(ErrorCode::MalformedFile, path.string() + ": only little-endian float32 is supported");
  const std::size_t count = text::parse_size(require("count"), "count");
  const std::size_t dim = text::parse_size(require("dim"), "dim");

  FeatureTable table;
  table.dim = dim;
  table.values.resize(count * dim);
  std::vector<unsigned char> raw(count * dim * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw Error(ErrorCode::MalformedFile, path.string() + ": truncated feature payload");
  if (in.peek() != std::ifstream::traits_type::eof())
    throw Error(ErrorCode::MalformedFile, path.string() + ": trailing bytes after feature payload");
  for (std::size_t i = 0; i < count * dim; ++i) {
    const std::uint32_t bits = std::uint32_t(raw[4 * i]) | (std::uint32_t(raw[4 * i + 1]) << 8) |
                               (std::uint32_t(raw[4 * i + 2]) << 16) | (std::uint32_t(raw[4 * i + 3]) << 24);
    float v = std::bit_cast<float>(bits);
    if (!std::isfinite(v)) throw Error(ErrorCode::MalformedFile, path.string() + ": non-finite feature value");
    table.values[i] = v;
  }

  const auto index_path = feature_index_path(path);
  std::ifstream idx(index_path);
  if (!idx) throw Error(ErrorCode::MissingAsset, "feature index " + index_path.string() + " not found");
  while (std::getline(idx, line)) {
    const std::string_view t = text::trim(line);
    if (t.empty()) continue;
    table.segment_ids.emplace_back(t);
  }
  if (table.segment_ids.size() != count)
    throw Error(ErrorCode::MalformedFile, index_path.string() + ": row count differs from header count");
  return table;
}

void write_feature_file(const std::filesystem::path& path, const FeatureTable& table) {
  if (table.values.size() != table.segment_ids.size() * table.dim)
    throw Error(ErrorCode::DimensionMismatch, "feature table values do not match count x dim");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << kFeatureMagic << '\n'
      << "count " << table.segment_ids.size() << '\n'
      << "dim " << table.dim << '\n'
      << "byte_order little-endian\n"
      << "element float32\n"
      << "end\n";
  for (float v : table.values) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
  std::ofstream idx(feature_index_path(path));
  for (const auto& id : table.segment_ids) idx << id << '\n';
  if (!idx) throw Error(ErrorCode::IoError, "write failed: " + feature_index_path(path).string());
}

// ---- score file -----------------------------------------------------------

std::vector<ScoreEntry> read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<ScoreEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line[0] == '#') continue;
    const auto fields = text::split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 3) throw Error(ErrorCode::MalformedFile, where + ": expected 3 tab-separated fields");
    ScoreEntry e;
    e.segment_id = std::string(fields[0]);
    e.class_id = static_cast<ClassId>(text::parse_int(fields[1], where));
    e.probability = text::parse_double(fields[2], where);
    if (!(e.probability >= 0.0 && e.probability <= 1.0))
      throw Error(ErrorCode::MalformedFile, where + ": probability outside [0,1]");
    out.push_back(std::move(e));
  }
  return out;
}

void write_score_file(const std::filesystem::path& path, const std::vector<ScoreEntry>& scores) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& s : scores) out << s.segment_id << '\t' << s.class_id << '\t' << text::format_double(s.probability) << '\n';
}

std::vector<SegmentRecord> ingest_segment_assets(std::vector<SegmentRecord> segments, const FeatureTable& features,
                                                 const std::vector<ScoreEntry>& scores, IngestReport* report) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < segments.size(); ++i) by_id.emplace(segments[i].segment_id, i);

  if (features.values.size() != features.segment_ids.size() * features.dim)
    throw Error(ErrorCode::DimensionMismatch, "feature rows have inconsistent length");
  for (std::size_t r = 0; r < features.segment_ids.size(); ++r) {
    auto it = by_id.find(features.segment_ids[r]);
    if (it == by_id.end()) throw Error(ErrorCode::UnknownSegmentId, "feature row for unknown segment '" + features.segment_ids[r] + "'");
    const auto row = features.row(r);
    segments[it->second].feature = LatentFeature{std::vector<double>(row.begin(), row.end())};
  }
  for (const auto& s : scores) {
    auto it = by_id.find(s.segment_id);
    if (it == by_id.end()) throw Error(ErrorCode::UnknownSegmentId, "score for unknown segment '" + s.segment_id + "'");
    if (!(s.probability >= 0.0 && s.probability <= 1.0))
      throw Error(ErrorCode::MalformedFile, "score outside [0,1] for segment '" + s.segment_id + "'");
    segments[it->second].class_scores[s.class_id] = s.probability;
  }

  IngestReport local;
  std::set<std::size_t> dims;
  for (const auto& seg : segments) {
    if (seg.feature) dims.insert(seg.feature->dim());
    else local.missing_feature.push_back(seg.segment_id);
    if (seg.class_scores.empty()) local.missing_scores.push_back(seg.segment_id);
  }
  if (dims.size() > 1) throw Error(ErrorCode::DimensionMismatch, "features of differing dimension");
  if (report) *report = std::move(local);
  return segments;
}

}  // namespace empaste
