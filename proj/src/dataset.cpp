#include "empaste/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "empaste/text.hpp"

namespace empaste {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- RLE --------------------------------------------------------------------

Rle rle_encode(const BinaryMask& mask) {
  Rle rle{mask.width(), mask.height(), {}};
  bool current = false;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      if (mask.at(x, y) != current) {
        rle.counts.push_back(run);
        run = 0;
        current = !current;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const Rle& rle) {
  if (rle.width < 0 || rle.height < 0) throw Error(ErrorCode::MalformedRle, "negative RLE extent");
  const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * static_cast<std::uint64_t>(rle.height);
  std::uint64_t sum = 0;
  for (auto c : rle.counts) sum += c;
  if (sum != total)
    throw Error(ErrorCode::MalformedRle,
                "RLE runs sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
  BinaryMask mask(rle.width, rle.height);
  std::uint64_t pos = 0;
  bool value = false;
  for (auto c : rle.counts) {
    if (value) {
      for (std::uint64_t k = pos; k < pos + c; ++k) {
        const int x = static_cast<int>(k / static_cast<std::uint64_t>(rle.height));
        const int y = static_cast<int>(k % static_cast<std::uint64_t>(rle.height));
        mask.set(x, y);
      }
    }
    pos += c;
    value = !value;
  }
  return mask;
}

// ---- input manifest ---------------------------------------------------------

fs::path DatasetManifest::segment_path(const std::string& image_id, const std::string& segment_id) const {
  return segment_dir / (image_id + "_" + segment_id + ".png");
}

fs::path DatasetManifest::heatmap_path(const std::string& image_id, ClassId class_id) const {
  return heatmap_dir / (image_id + "_" + std::to_string(class_id) + ".png");
}

const ManifestImage* DatasetManifest::find_image(const std::string& image_id) const {
  for (const auto& img : images)
    if (img.image_id == image_id) return &img;
  return nullptr;
}

const Category* DatasetManifest::find_category(ClassId id) const {
  for (const auto& c : categories)
    if (c.id == id) return &c;
  return nullptr;
}

namespace {

void require_file(const fs::path& p, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw Error(ErrorCode::MissingAsset, what + " not found: " + p.string());
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingAsset, "manifest not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }

  DatasetManifest m;
  m.base_dir = fs::absolute(path).parent_path().lexically_normal();
  auto resolve = [&](const std::string& rel) { return (m.base_dir / rel).lexically_normal(); };
  try {
    for (const auto& c : doc.at("categories")) {
      Category cat;
      cat.id = c.at("id").get<ClassId>();
      cat.name = c.at("name").get<std::string>();
      cat.supercategory = c.value("supercategory", std::string{});
      if (m.find_category(cat.id))
        throw Error(ErrorCode::ParseError, "category id " + std::to_string(cat.id) + " declared twice");
      m.categories.push_back(std::move(cat));
    }
    m.segment_dir = resolve(doc.value("segment_dir", std::string("segments")));
    m.heatmap_dir = resolve(doc.value("heatmap_dir", std::string("heatmaps")));
    if (doc.contains("features")) m.features = resolve(doc.at("features").get<std::string>());
    if (doc.contains("scores")) m.scores = resolve(doc.at("scores").get<std::string>());

    std::set<std::string> ids;
    std::map<std::string, std::string> segment_owner;
    for (const auto& j : doc.at("images")) {
      ManifestImage img;
      img.image_id = j.at("image_id").get<std::string>();
      img.path = resolve(j.at("path").get<std::string>());
      img.width = j.at("width").get<int>();
      img.height = j.at("height").get<int>();
      img.labels = j.at("labels").get<std::vector<ClassId>>();
      img.segments = j.value("segments", std::vector<std::string>{});
      if (img.image_id.empty()) throw Error(ErrorCode::ParseError, "empty image_id");
      if (img.width <= 0 || img.height <= 0)
        throw Error(ErrorCode::ParseError, "image " + img.image_id + " has a non-positive extent");
      if (!ids.insert(img.image_id).second) throw Error(ErrorCode::DuplicateImageId, "duplicate image_id " + img.image_id);
      for (ClassId l : img.labels)
        if (!m.find_category(l))
          throw Error(ErrorCode::ParseError,
                      "image " + img.image_id + " has label id " + std::to_string(l) + " not in the category list");
      for (const auto& s : img.segments) {
        auto [it, fresh] = segment_owner.emplace(s, img.image_id);
        if (!fresh)
          throw Error(ErrorCode::ParseError,
                      "segment id " + s + " appears in images " + it->second + " and " + img.image_id);
      }
      m.images.push_back(std::move(img));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }

  if (!m.features.empty()) {
    require_file(m.features, "feature file");
    require_file(feature_index_path(m.features), "feature index");
  }
  if (!m.scores.empty()) require_file(m.scores, "score file");
  for (const auto& img : m.images) {
    require_file(img.path, "image");
    for (const auto& s : img.segments) require_file(m.segment_path(img.image_id, s), "segment mask");
    for (ClassId l : img.labels) require_file(m.heatmap_path(img.image_id, l), "heatmap");
  }
  return m;
}

namespace {

std::string rel(const fs::path& p, const fs::path& base) {
  const fs::path a = fs::absolute(p).lexically_normal();
  const fs::path b = fs::absolute(base).lexically_normal();
  fs::path r = a.lexically_relative(b);
  return (r.empty() ? a : r).generic_string();
}

}  // namespace

void write_manifest(const fs::path& path, const DatasetManifest& m, const std::optional<fs::path>& relative_to) {
  const fs::path base = relative_to ? *relative_to : path.parent_path().empty() ? fs::path(".") : path.parent_path();
  ordered_json doc;
  doc["categories"] = ordered_json::array();
  for (const auto& c : m.categories) {
    ordered_json j;
    j["id"] = c.id;
    j["name"] = c.name;
    if (!c.supercategory.empty()) j["supercategory"] = c.supercategory;
    doc["categories"].push_back(j);
  }
  doc["segment_dir"] = rel(m.segment_dir, base);
  doc["heatmap_dir"] = rel(m.heatmap_dir, base);
  if (!m.features.empty()) doc["features"] = rel(m.features, base);
  if (!m.scores.empty()) doc["scores"] = rel(m.scores, base);
  doc["images"] = ordered_json::array();
  for (const auto& img : m.images) {
    ordered_json j;
    j["image_id"] = img.image_id;
    j["path"] = rel(img.path, base);
    j["width"] = img.width;
    j["height"] = img.height;
    j["labels"] = img.labels;
    j["segments"] = img.segments;
    doc["images"].push_back(j);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

DatasetManifest restrict_manifest(const DatasetManifest& manifest, const ClassIndex& subset) {
  std::map<std::string, std::set<ClassId>> labels;
  for (const auto& [cls, refs] : subset)
    for (const auto& r : refs) labels[r.image_id].insert(cls);
  DatasetManifest out = manifest;
  out.images.clear();
  for (const auto& img : manifest.images) {
    auto it = labels.find(img.image_id);
    if (it == labels.end()) continue;
    ManifestImage copy = img;
    copy.labels.assign(it->second.begin(), it->second.end());
    out.images.push_back(std::move(copy));
  }
  return out;
}

// ---- COCO output ------------------------------------------------------------

CocoAnnotation make_annotation(std::int64_t id, std::int64_t image_id, ClassId category_id, const BinaryMask& mask) {
  CocoAnnotation a;
  a.id = id;
  a.image_id = image_id;
  a.category_id = category_id;
  a.segmentation = rle_encode(mask);
  const PixelBox box = mask.bounding_box();
  a.bbox = {box.x0, box.y0, box.width(), box.height()};
  if (box.empty()) a.bbox = {0, 0, 0, 0};
  a.area = mask.area();
  return a;
}

void validate_annotation_set(const AnnotationSet& set) {
  std::map<std::int64_t, const CocoImage*> images;
  for (const auto& img : set.images)
    if (!images.emplace(img.id, &img).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate COCO image id " + std::to_string(img.id));
  std::set<ClassId> cats;
  for (const auto& c : set.categories)
    if (!cats.insert(c.id).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate COCO category id " + std::to_string(c.id));
  std::set<std::int64_t> ann_ids;
  for (const auto& a : set.annotations) {
    const std::string tag = "annotation " + std::to_string(a.id);
    if (!ann_ids.insert(a.id).second) throw Error(ErrorCode::InvalidArgument, "duplicate " + tag);
    auto img = images.find(a.image_id);
    if (img == images.end()) throw Error(ErrorCode::InvalidArgument, tag + " references a missing image");
    if (!cats.count(a.category_id)) throw Error(ErrorCode::InvalidArgument, tag + " references a missing category");
    if (a.segmentation.width != img->second->width || a.segmentation.height != img->second->height)
      throw Error(ErrorCode::InvalidArgument, tag + " mask extent differs from its image");
    if (a.iscrowd != 0) throw Error(ErrorCode::InvalidArgument, tag + " has iscrowd != 0");
    const BinaryMask mask = rle_decode(a.segmentation);
    if (mask.area() != a.area) throw Error(ErrorCode::InvalidArgument, tag + " area differs from its mask");
    const PixelBox box = mask.bounding_box();
    const std::array<int, 4> tight =
        box.empty() ? std::array<int, 4>{0, 0, 0, 0} : std::array<int, 4>{box.x0, box.y0, box.width(), box.height()};
    if (tight != a.bbox) throw Error(ErrorCode::InvalidArgument, tag + " bbox is not the tight mask bounds");
  }
}

std::string coco_to_string(const AnnotationSet& set) {
  ordered_json doc;
  doc["images"] = ordered_json::array();
  for (const auto& img : set.images) {
    ordered_json j;
    j["id"] = img.id;
    j["file_name"] = img.file_name;
    j["width"] = img.width;
    j["height"] = img.height;
    doc["images"].push_back(std::move(j));
  }
  doc["annotations"] = ordered_json::array();
  for (const auto& a : set.annotations) {
    ordered_json j;
    j["id"] = a.id;
    j["image_id"] = a.image_id;
    j["category_id"] = a.category_id;
    j["segmentation"] = {{"size", {a.segmentation.height, a.segmentation.width}}, {"counts", a.segmentation.counts}};
    j["area"] = a.area;
    j["bbox"] = a.bbox;
    j["iscrowd"] = a.iscrowd;
    doc["annotations"].push_back(std::move(j));
  }
  doc["categories"] = ordered_json::array();
  for (const auto& c : set.categories) {
    ordered_json j;
    j["id"] = c.id;
    j["name"] = c.name;
    j["supercategory"] = c.supercategory;
    doc["categories"].push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

void write_coco(const AnnotationSet& set, const fs::path& path) {
  validate_annotation_set(set);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << coco_to_string(set);
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

AnnotationSet read_coco(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  AnnotationSet set;
  try {
    const json doc = json::parse(in);
    for (const auto& j : doc.at("images"))
      set.images.push_back({j.at("id").get<std::int64_t>(), j.at("file_name").get<std::string>(),
                            j.at("width").get<int>(), j.at("height").get<int>()});
    for (const auto& j : doc.at("categories"))
      set.categories.push_back(
          {j.at("id").get<ClassId>(), j.at("name").get<std::string>(), j.value("supercategory", std::string{})});
    for (const auto& j : doc.at("annotations")) {
      CocoAnnotation a;
      a.id = j.at("id").get<std::int64_t>();
      a.image_id = j.at("image_id").get<std::int64_t>();
      a.category_id = j.at("category_id").get<ClassId>();
      const auto& seg = j.at("segmentation");
      const auto size = seg.at("size").get<std::array<int, 2>>();
      a.segmentation = {size[1], size[0], seg.at("counts").get<std::vector<std::uint32_t>>()};
      a.area = j.at("area").get<std::size_t>();
      a.bbox = j.at("bbox").get<std::array<int, 4>>();
      a.iscrowd = j.at("iscrowd").get<int>();
      set.annotations.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  try {
    validate_annotation_set(set);
  } catch (const Error& e) {
    throw Error(e.code() == ErrorCode::MalformedRle ? e.code() : ErrorCode::MalformedFile,
                path.string() + ": " + e.message());
  }
  return set;
}

// ---- foreground manifest ----------------------------------------------------

std::vector<ForegroundRecord> foreground_records(const std::vector<ForegroundSet>& sets) {
  std::vector<ForegroundRecord> out;
  for (const auto& s : sets)
    for (const auto& [image_id, sel] : s.selections)
      out.push_back({s.class_id, image_id, sel.segment_id, sel.mdist, sel.score});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.class_id < b.class_id || (a.class_id == b.class_id && a.image_id < b.image_id);
  });
  return out;
}

void write_foreground_manifest(const fs::path& path, const std::vector<ForegroundRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# class_id\timage_id\tsegment_id\tmdist\tscore\n";
  for (const auto& r : records)
    out << r.class_id << '\t' << r.image_id << '\t' << r.segment_id << '\t' << text::format_double(r.mdist) << '\t'
        << text::format_double(r.score) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<ForegroundRecord> read_foreground_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<ForegroundRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line[0] == '#') continue;
    const auto f = text::split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw Error(ErrorCode::MalformedFile, where + ": expected 5 tab-separated fields");
    ForegroundRecord r;
    r.class_id = static_cast<ClassId>(text::parse_int(f[0], where));
    r.image_id = std::string(f[1]);
    r.segment_id = std::string(f[2]);
    r.mdist = text::parse_double(f[3], where);
    r.score = text::parse_double(f[4], where);
    out.push_back(std::move(r));
  }
  return out;
}

ClassIndex class_index_from(const std::vector<ForegroundRecord>& records) {
  ClassIndex index;
  for (const auto& r : records) index[r.class_id].push_back({r.image_id, r.segment_id});
  return index;
}

void write_class_model(const fs::path& path, const ClassModel& model) {
  const std::size_t d = model.dim();
  FeatureTable t;
  t.dim = d;
  t.segment_ids.push_back("mu");
  for (std::size_t i = 0; i < d; ++i) t.values.push_back(static_cast<float>(model.mu()[static_cast<Eigen::Index>(i)]));
  for (std::size_t r = 0; r < d; ++r) {
    t.segment_ids.push_back("sigma_" + std::to_string(r));
    for (std::size_t c = 0; c < d; ++c)
      t.values.push_back(static_cast<float>(model.sigma()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
  }
  write_feature_file(path, t);
}

}  // namespace empaste
