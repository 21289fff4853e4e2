#include "empaste/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "empaste/captions.hpp"
#include "empaste/dataset.hpp"
#include "empaste/image_io.hpp"
#include "empaste/parallel.hpp"
#include "empaste/rng.hpp"

#ifndef EMPASTE_DATA_DIR
#define EMPASTE_DATA_DIR "data"
#endif

namespace empaste {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- config -----------------------------------------------------------------

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, "config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error(ErrorCode::ParseError, "unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

void PipelineConfig::validate() const {
  if (!seed) throw Error(ErrorCode::InvalidArgument, "seed is required (config 'seed' or --seed)");
  if (manifest.empty()) throw Error(ErrorCode::InvalidArgument, "config 'manifest' is required");
  if (output_dir.empty()) throw Error(ErrorCode::InvalidArgument, "config 'output_dir' is required (or --out)");
  if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  if (!(min_area_frac > 0.0 && min_area_frac < max_extent_frac && max_extent_frac <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "proposals: need 0 < min_area_frac < max_extent_frac <= 1");
  if (erosion_radius < 0) throw Error(ErrorCode::InvalidArgument, "proposals.erosion_radius must be >= 0");
  fem.validate();
  paste.validate();
  longtail.validate();
  if (top_k < 1) throw Error(ErrorCode::InvalidArgument, "pool.top_k must be >= 1");
  if (ranking_scores && !generated_manifest)
    throw Error(ErrorCode::InvalidArgument, "pool.scores given without pool.generated_manifest");
}

PipelineConfig parse_pipeline_config(const std::string& json_text, const fs::path& base_dir) {
  PipelineConfig c;
  c.lexicon = fs::path(EMPASTE_DATA_DIR) / "voc_lexicon.json";
  c.distractors = fs::path(EMPASTE_DATA_DIR) / "distractors.json";
  try {
    const json doc = json::parse(json_text);
    check_keys(doc, {"manifest", "output_dir", "seed", "workers", "proposals", "fem", "paste", "pool", "longtail", "captions"},
               "");
    if (doc.contains("manifest")) c.manifest = resolve(base_dir, doc.at("manifest").get<std::string>());
    if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
    if (doc.contains("seed")) {
      if (!doc.at("seed").is_number_unsigned()) throw Error(ErrorCode::ParseError, "seed must be a non-negative integer");
      c.seed = doc.at("seed").get<std::uint64_t>();
    }
    read_opt(doc, "workers", c.workers);

    if (doc.contains("proposals")) {
      const auto& p = doc.at("proposals");
      check_keys(p, {"min_area_frac", "max_extent_frac", "erosion_radius", "pad_value"}, "proposals");
      read_opt(p, "min_area_frac", c.min_area_frac);
      read_opt(p, "max_extent_frac", c.max_extent_frac);
      read_opt(p, "erosion_radius", c.erosion_radius);
      read_opt(p, "pad_value", c.pad_value);
    }
    if (doc.contains("fem")) {
      const auto& f = doc.at("fem");
      check_keys(f, {"top_n", "keep_percent", "iterations", "cam_threshold", "score_threshold", "covariance_floor",
                     "relative_ridge", "covariance", "metric"},
                 "fem");
      read_opt(f, "top_n", c.fem.top_n);
      read_opt(f, "keep_percent", c.fem.keep_percent);
      read_opt(f, "iterations", c.fem.iterations);
      read_opt(f, "cam_threshold", c.fem.cam_threshold);
      read_opt(f, "score_threshold", c.fem.score_threshold);
      read_opt(f, "covariance_floor", c.fem.covariance_floor);
      read_opt(f, "relative_ridge", c.fem.relative_ridge);
      const std::string cov = f.value("covariance", std::string("full"));
      if (cov == "full") c.fem.covariance = CovarianceMode::Full;
      else if (cov == "diagonal") c.fem.covariance = CovarianceMode::Diagonal;
      else throw Error(ErrorCode::ParseError, "fem.covariance must be 'full' or 'diagonal'");
      const std::string metric = f.value("metric", std::string("mahalanobis"));
      if (metric == "mahalanobis") c.fem.metric = MatchMetric::Mahalanobis;
      else if (metric == "cosine") c.fem.metric = MatchMetric::Cosine;
      else throw Error(ErrorCode::ParseError, "fem.metric must be 'mahalanobis' or 'cosine'");
    }
    if (doc.contains("paste")) {
      const auto& p = doc.at("paste");
      check_keys(p, {"mode", "n_p", "max_rotation_deg", "scale_low", "scale_high", "blend", "gaussian_sigma",
                     "min_inscribed_radius", "max_rescale_retries", "selection"},
                 "paste");
      const std::string mode = p.value("mode", std::string("random"));
      if (mode == "random") c.paste_mode = PasteMode::Random;
      else if (mode == "space_maximize") c.paste_mode = PasteMode::SpaceMaximize;
      else throw Error(ErrorCode::ParseError, "paste.mode must be 'random' or 'space_maximize'");
      read_opt(p, "n_p", c.paste.n_p);
      read_opt(p, "max_rotation_deg", c.paste.max_rotation_deg);
      read_opt(p, "scale_low", c.paste.scale_low);
      read_opt(p, "scale_high", c.paste.scale_high);
      read_opt(p, "gaussian_sigma", c.paste.gaussian_sigma);
      read_opt(p, "min_inscribed_radius", c.paste.min_inscribed_radius);
      read_opt(p, "max_rescale_retries", c.paste.max_rescale_retries);
      const std::string blend = p.value("blend", std::string("gaussian"));
      if (blend == "none") c.paste.blend = BlendMode::None;
      else if (blend == "gaussian") c.paste.blend = BlendMode::Gaussian;
      else if (blend == "poisson") c.paste.blend = BlendMode::Poisson;
      else throw Error(ErrorCode::ParseError, "paste.blend must be 'none', 'gaussian' or 'poisson'");
      const std::string sel = p.value("selection", std::string("uniform"));
      if (sel == "uniform") c.selection = SelectionMode::Uniform;
      else if (sel == "balanced") c.selection = SelectionMode::Balanced;
      else throw Error(ErrorCode::ParseError, "paste.selection must be 'uniform' or 'balanced'");
    }
    if (doc.contains("pool")) {
      const auto& p = doc.at("pool");
      check_keys(p, {"top_k", "dup_factor", "generated_manifest", "scores"}, "pool");
      read_opt(p, "top_k", c.top_k);
      read_opt(p, "dup_factor", c.dup_factor);
      if (p.contains("generated_manifest") && !p.at("generated_manifest").is_null())
        c.generated_manifest = resolve(base_dir, p.at("generated_manifest").get<std::string>());
      if (p.contains("scores") && !p.at("scores").is_null())
        c.ranking_scores = resolve(base_dir, p.at("scores").get<std::string>());
    }
    if (doc.contains("longtail")) {
      const auto& l = doc.at("longtail");
      check_keys(l, {"b", "max_count", "min_count"}, "longtail");
      read_opt(l, "b", c.longtail.b);
      read_opt(l, "max_count", c.longtail.max_count);
      read_opt(l, "min_count", c.longtail.min_count);
    }
    if (doc.contains("captions")) {
      const auto& cap = doc.at("captions");
      check_keys(cap, {"input", "lexicon", "distractors"}, "captions");
      if (cap.contains("input")) c.captions = resolve(base_dir, cap.at("input").get<std::string>());
      if (cap.contains("lexicon")) c.lexicon = resolve(base_dir, cap.at("lexicon").get<std::string>());
      if (cap.contains("distractors")) c.distractors = resolve(base_dir, cap.at("distractors").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_pipeline_config(text, fs::absolute(path).parent_path());
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"extract", "crops",           "pool",     "paste",
                                               "longtail", "rewrite-captions", "validate", "run"};
  return stages;
}

// ---- shared loading ---------------------------------------------------------

namespace {

// Segment masks of one image, as proposals; empty masks keep an empty record
// so their assets can still be matched.
std::vector<SegmentRecord> load_raw_segments(const DatasetManifest& m, const ManifestImage& img) {
  std::vector<SegmentRecord> out;
  for (const auto& sid : img.segments) {
    const fs::path p = m.segment_path(img.image_id, sid);
    BinaryMask full = io::read_mask_png(p);
    if (full.width() != img.width || full.height() != img.height)
      throw Error(ErrorCode::DimensionMismatch, "segment " + p.string() + " does not match its image extent");
    if (full.area() == 0) {
      SegmentRecord empty;
      empty.image_id = img.image_id;
      empty.segment_id = sid;
      out.push_back(std::move(empty));
      continue;
    }
    out.push_back(make_segment(img.image_id, sid, full));
  }
  return out;
}

// Area/extent filter, then erosion; a segment that erodes away keeps its
// original mask.
std::vector<SegmentRecord> clean_segments(std::vector<SegmentRecord> segs, const ManifestImage& img,
                                          const PipelineConfig& cfg) {
  std::erase_if(segs, [](const SegmentRecord& s) { return s.mask.area() == 0; });
  segs = filter_segments(std::move(segs), {img.width, img.height}, cfg.min_area_frac, cfg.max_extent_frac);
  if (cfg.erosion_radius == 0) return segs;
  for (auto& s : segs) {
    try {
      const BinaryMask eroded = erode_mask(s.mask, cfg.erosion_radius);
      const PixelBox box = eroded.bounding_box();
      s.mask = eroded.crop(box);
      s.offset_x += box.x0;
      s.offset_y += box.y0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateResult) throw;
    }
  }
  return segs;
}

struct StageContext {
  const PipelineConfig& cfg;
  fs::path in_dir;   // where earlier stage outputs are read
  fs::path out_dir;  // staging directory
  ordered_json& report;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path require_input(const fs::path& dir, const std::string& name, const std::string& producer) {
  const fs::path p = dir / name;
  std::error_code ec;
  if (!fs::exists(p, ec))
    throw Error(ErrorCode::MissingAsset, p.string() + " not found; run the '" + producer + "' stage first");
  return p;
}

// ---- extract ----------------------------------------------------------------

void stage_extract(StageContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = ctx.cfg;
  const DatasetManifest m = read_manifest(cfg.manifest);
  if (m.features.empty() || m.scores.empty())
    throw Error(ErrorCode::MissingAsset, "manifest must reference a feature file and a score file for extraction");
  const FeatureTable features = read_feature_file(m.features);
  const std::vector<ScoreEntry> scores = read_score_file(m.scores);

  const std::size_t n = m.images.size();
  std::vector<std::vector<SegmentRecord>> raw(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) { raw[i] = load_raw_segments(m, m.images[i]); });

  std::vector<SegmentRecord> all;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < n; ++i)
    for (auto& s : raw[i]) {
      all.push_back(std::move(s));
      owner.push_back(i);
    }
  IngestReport ingest;
  all = ingest_segment_assets(std::move(all), features, scores, &ingest);
  std::vector<std::vector<SegmentRecord>> per_image(n);
  for (std::size_t k = 0; k < all.size(); ++k) per_image[owner[k]].push_back(std::move(all[k]));
  const std::size_t loaded_count = all.size();
  std::size_t kept_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    per_image[i] = clean_segments(std::move(per_image[i]), m.images[i], cfg);
    kept_count += per_image[i].size();
  }

  fs::create_directories(ctx.out_dir / "models");
  std::vector<ForegroundSet> sets;
  ordered_json classes = ordered_json::array();
  for (const auto& cat : m.categories) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (std::find(m.images[i].labels.begin(), m.images[i].labels.end(), cat.id) != m.images[i].labels.end())
        members.push_back(i);
    ordered_json entry;
    entry["class_id"] = cat.id;
    entry["name"] = cat.name;
    entry["images"] = members.size();
    std::vector<FemImage> fem_images(members.size());
    parallel_for(members.size(), cfg.workers, [&](std::size_t k) {
      const auto& img = m.images[members[k]];
      FemImage fi;
      fi.image_id = img.image_id;
      fi.segments = per_image[members[k]];
      fi.heatmap = load_heatmap(m.heatmap_path(img.image_id, cat.id));
      if (fi.heatmap.width != img.width || fi.heatmap.height != img.height)
        throw Error(ErrorCode::DimensionMismatch, "heatmap for " + img.image_id + " does not match the image extent");
      fem_images[k] = std::move(fi);
    });
    try {
      FemResult res = run_fem(fem_images, cat.id, cfg.fem, cfg.workers);
      entry["extracted"] = res.foregrounds.selections.size();
      entry["images_without_activation"] = res.images_without_activation;
      ordered_json hist = ordered_json::array();
      for (const auto& h : res.history) hist.push_back(h.selections.size());
      entry["selected_per_iteration"] = hist;
      write_class_model(ctx.out_dir / "models" / ("class_" + std::to_string(cat.id) + ".bin"), *res.model);
      sets.push_back(std::move(res.foregrounds));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooFewSamples) throw;
      entry["extracted"] = 0;
      entry["skipped"] = e.what();
    }
    classes.push_back(std::move(entry));
  }

  const auto records = foreground_records(sets);
  write_foreground_manifest(ctx.out_dir / "foregrounds.tsv", records);

  ordered_json r;
  r["images"] = n;
  r["segments_loaded"] = loaded_count;
  r["segments_kept"] = kept_count;
  r["segments_missing_feature"] = ingest.missing_feature.size();
  r["segments_missing_scores"] = ingest.missing_scores.size();
  r["classes"] = std::move(classes);
  r["total_extracted"] = records.size();
  r["seconds"] = seconds_since(t0);
  ctx.report["stages"]["extract"] = std::move(r);
}

// ---- crops ------------------------------------------------------------------

void stage_crops(StageContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest m = read_manifest(ctx.cfg.manifest);
  fs::create_directories(ctx.out_dir / "crops");
  std::vector<std::size_t> counts(m.images.size(), 0);
  parallel_for(m.images.size(), ctx.cfg.workers, [&](std::size_t i) {
    const auto& img = m.images[i];
    const RasterImage pixels = io::read_png(img.path, 3);
    if (pixels.width() != img.width || pixels.height() != img.height)
      throw Error(ErrorCode::DimensionMismatch, "image " + img.path.string() + " does not match its manifest extent");
    for (const auto& s : clean_segments(load_raw_segments(m, img), img, ctx.cfg)) {
      io::write_png(ctx.out_dir / "crops" / (img.image_id + "_" + s.segment_id + ".png"),
                    prepare_classifier_crop(pixels, s, ctx.cfg.pad_value));
      ++counts[i];
    }
  });
  ordered_json r;
  std::size_t total = 0;
  for (auto c : counts) total += c;
  r["crops"] = total;
  r["seconds"] = seconds_since(t0);
  ctx.report["stages"]["crops"] = std::move(r);
}

// ---- pool -------------------------------------------------------------------

void stage_pool(StageContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = ctx.cfg;
  const DatasetManifest m = read_manifest(cfg.manifest);
  std::vector<OriginalBackground> originals;
  for (const auto& img : m.images) originals.push_back({img.image_id, img.path.generic_string()});
  std::vector<GeneratedBackground> generated;
  std::optional<std::map<std::string, double>> scores;
  if (cfg.generated_manifest) generated = read_generated_manifest(*cfg.generated_manifest);
  if (cfg.ranking_scores) scores = read_ranking_scores(*cfg.ranking_scores);
  BackgroundPool pool = assemble_background_pool(originals, generated, scores, cfg.top_k, cfg.dup_factor);
  std::size_t n_generated = 0;
  for (auto& e : pool.entries) {
    if (e.origin != BackgroundOrigin::Generated) continue;
    ++n_generated;
    e.path = resolve(cfg.generated_manifest->parent_path(), e.path).generic_string();
  }
  write_pool(ctx.out_dir / "pool.tsv", pool);
  ordered_json r;
  r["originals"] = originals.size();
  r["original_entries"] = pool.entries.size() - n_generated;
  r["generated_candidates"] = generated.size();
  r["generated_entries"] = n_generated;
  r["pool_size"] = pool.entries.size();
  r["seconds"] = seconds_since(t0);
  ctx.report["stages"]["pool"] = std::move(r);
}

// ---- paste ------------------------------------------------------------------

struct SceneOutput {
  int width = 0;
  int height = 0;
  std::vector<CocoAnnotation> annotations;  // ids assigned after the merge
  std::vector<char> pasted;
  bool stopped_early = false;
  bool skipped = false;
  std::string warning;
  std::size_t poisson_fallbacks = 0;
};

void stage_paste(StageContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = ctx.cfg;
  const DatasetManifest m = read_manifest(cfg.manifest);
  const auto records = read_foreground_manifest(require_input(ctx.in_dir, "foregrounds.tsv", "extract"));
  const BackgroundPool pool = read_pool(require_input(ctx.in_dir, "pool.tsv", "pool"));

  // Cutouts and pseudo-instances from the extracted foregrounds.
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (!m.find_image(records[k].image_id))
      throw Error(ErrorCode::UnknownSegmentId, "foreground image " + records[k].image_id + " is not in the manifest");
    by_image[records[k].image_id].push_back(k);
  }
  std::vector<std::string> image_keys;
  for (const auto& [id, ks] : by_image) image_keys.push_back(id);
  std::vector<ForegroundCutout> cutouts(records.size());
  std::vector<SegmentRecord> segments(records.size());
  parallel_for(image_keys.size(), cfg.workers, [&](std::size_t i) {
    const ManifestImage& img = *m.find_image(image_keys[i]);
    const RasterImage pixels = io::read_png(img.path, 3);
    if (pixels.width() != img.width || pixels.height() != img.height)
      throw Error(ErrorCode::DimensionMismatch, "image " + img.path.string() + " does not match its manifest extent");
    const auto segs = clean_segments(load_raw_segments(m, img), img, cfg);
    for (std::size_t k : by_image.at(image_keys[i])) {
      const auto it = std::find_if(segs.begin(), segs.end(),
                                   [&](const SegmentRecord& s) { return s.segment_id == records[k].segment_id; });
      if (it == segs.end())
        throw Error(ErrorCode::UnknownSegmentId,
                    "foreground segment " + records[k].segment_id + " is not a usable segment of " + img.image_id);
      const PixelBox box{it->offset_x, it->offset_y, it->offset_x + it->mask.width() - 1,
                         it->offset_y + it->mask.height() - 1};
      cutouts[k] = {records[k].class_id, it->mask, pixels.crop(box), img.image_id, it->segment_id};
      segments[k] = *it;
    }
  });

  const SelectionDistribution dist =
      cutouts.empty() ? SelectionDistribution{} : make_selection_distribution(cutouts, cfg.selection);
  if (cutouts.empty() && cfg.paste.n_p > 0) throw Error(ErrorCode::EmptyPool, "no extracted foregrounds to paste");

  fs::create_directories(ctx.out_dir / "images");
  const std::size_t n = pool.entries.size();
  std::vector<SceneOutput> scenes(n);
  parallel_for(n, cfg.workers, [&](std::size_t s) {
    const BackgroundEntry& entry = pool.entries[s];
    Rng rng(derive_seed(*cfg.seed, "paste", std::to_string(s)));
    CompositeScene scene(io::read_png(entry.path, 3));
    if (entry.origin == BackgroundOrigin::Original) {
      auto it = by_image.find(entry.key);
      if (it != by_image.end()) {
        for (std::size_t k : it->second) {
          BinaryMask mask = segments[k].image_mask(scene.width(), scene.height());
          scene.add_existing(records[k].class_id, std::move(mask), records[k].image_id, records[k].segment_id);
        }
      }
    }
    SceneOutput& out = scenes[s];
    PasteLog log;
    try {
      scene = cfg.paste_mode == PasteMode::Random ? random_paste_scene(scene, cutouts, dist, cfg.paste, rng, &log)
                                                  : space_maximize_paste_scene(scene, cutouts, dist, cfg.paste, rng, &log);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoFreeSpace && e.code() != ErrorCode::PlacementImpossible) throw;
      out.skipped = true;
      out.warning = e.what();
    }
    out.stopped_early = log.stopped_early;
    if (!log.warning.empty()) out.warning = log.warning;
    BlendStats stats;
    const RasterImage rendered = blend_composite(scene, cfg.paste.blend, cfg.paste, &stats);
    out.poisson_fallbacks = stats.poisson_fallbacks;
    char name[32];
    std::snprintf(name, sizeof name, "scene_%06zu.png", s);
    io::write_png(ctx.out_dir / "images" / name, rendered);
    out.width = scene.width();
    out.height = scene.height();
    std::vector<const SceneInstance*> ordered;
    for (const auto& inst : scene.instances()) ordered.push_back(&inst);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->paste_index < b->paste_index; });
    for (const auto* inst : ordered) {
      out.annotations.push_back(make_annotation(0, static_cast<std::int64_t>(s) + 1, inst->class_id, inst->mask));
      out.pasted.push_back(inst->paste_index >= 0 ? 1 : 0);
    }
  });

  AnnotationSet set;
  for (const auto& c : m.categories) set.categories.push_back(c);
  std::map<ClassId, std::size_t> pasted_per_class;
  std::map<ClassId, std::size_t> existing_per_class;
  std::size_t skipped = 0, stopped = 0, fallbacks = 0;
  std::int64_t next_id = 1;
  for (std::size_t s = 0; s < n; ++s) {
    char name[40];
    std::snprintf(name, sizeof name, "images/scene_%06zu.png", s);
    set.images.push_back({static_cast<std::int64_t>(s) + 1, name, scenes[s].width, scenes[s].height});
    for (std::size_t a = 0; a < scenes[s].annotations.size(); ++a) {
      CocoAnnotation ann = std::move(scenes[s].annotations[a]);
      ann.id = next_id++;
      (scenes[s].pasted[a] ? pasted_per_class : existing_per_class)[ann.category_id]++;
      set.annotations.push_back(std::move(ann));
    }
    skipped += scenes[s].skipped;
    stopped += scenes[s].stopped_early;
    fallbacks += scenes[s].poisson_fallbacks;
  }
  write_coco(set, ctx.out_dir / "annotations.json");

  ordered_json r;
  r["mode"] = cfg.paste_mode == PasteMode::Random ? "random" : "space_maximize";
  r["scenes"] = n;
  r["foreground_pool"] = cutouts.size();
  r["annotations"] = set.annotations.size();
  ordered_json per_class = ordered_json::array();
  for (const auto& c : m.categories) {
    ordered_json e;
    e["class_id"] = c.id;
    e["name"] = c.name;
    e["pasted"] = pasted_per_class[c.id];
    e["existing"] = existing_per_class[c.id];
    per_class.push_back(std::move(e));
  }
  r["classes"] = std::move(per_class);
  r["scenes_without_pastes"] = skipped;
  r["scenes_stopped_early"] = stopped;
  r["poisson_fallbacks"] = fallbacks;
  r["seconds"] = seconds_since(t0);
  ctx.report["stages"]["paste"] = std::move(r);
}

// ---- longtail ---------------------------------------------------------------

void stage_longtail(StageContext& ctx, const fs::path& final_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = ctx.cfg;
  const DatasetManifest m = read_manifest(cfg.manifest);
  const auto records = read_foreground_manifest(require_input(ctx.in_dir, "foregrounds.tsv", "extract"));
  const ClassIndex index = class_index_from(records);
  const auto reference = pareto_reference_counts(cfg.longtail, index.size());
  Rng rng(derive_seed(*cfg.seed, "longtail", ""));
  const ClassIndex subset = subsample_longtail(index, reference, rng);

  std::set<MaskRef> keep;
  for (const auto& [cls, refs] : subset) keep.insert(refs.begin(), refs.end());
  std::vector<ForegroundRecord> kept;
  for (const auto& r : records)
    if (keep.count({r.image_id, r.segment_id}) && subset.count(r.class_id)) kept.push_back(r);
  // A mask listed under two classes is kept only for the classes that sampled it.
  std::erase_if(kept, [&](const ForegroundRecord& r) {
    const auto& refs = subset.at(r.class_id);
    return std::find(refs.begin(), refs.end(), MaskRef{r.image_id, r.segment_id}) == refs.end();
  });

  fs::create_directories(ctx.out_dir / "longtail");
  write_foreground_manifest(ctx.out_dir / "longtail" / "foregrounds.tsv", kept);
  write_manifest(ctx.out_dir / "longtail" / "manifest.json", restrict_manifest(m, subset), final_dir / "longtail");

  ordered_json r;
  ordered_json per_class = ordered_json::array();
  const auto order = longtail_class_order(index);
  for (std::size_t i = 0; i < order.size(); ++i) {
    ordered_json e;
    e["class_id"] = order[i];
    e["available"] = index.at(order[i]).size();
    e["reference"] = reference[i];
    e["sampled"] = subset.at(order[i]).size();
    per_class.push_back(std::move(e));
  }
  r["classes"] = std::move(per_class);
  r["total_sampled"] = kept.size();
  r["seconds"] = seconds_since(t0);
  ctx.report["stages"]["longtail"] = std::move(r);
}

// ---- captions ---------------------------------------------------------------

void stage_captions(StageContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = ctx.cfg;
  if (!cfg.captions) throw Error(ErrorCode::InvalidArgument, "config 'captions.input' is required for this stage");
  const CaptionRewriter rewriter(load_lexicon(cfg.lexicon), load_distractors(cfg.distractors));
  std::vector<CaptionLine> lines = read_captions(*cfg.captions);
  std::vector<std::size_t> mentions(lines.size());
  parallel_for(lines.size(), cfg.workers, [&](std::size_t i) {
    Rng rng(derive_seed(*cfg.seed, "captions", lines[i].image_id + "#" + std::to_string(i)));
    mentions[i] = rewriter.count_mentions(lines[i].caption);
    lines[i].caption = rewriter.rewrite(lines[i].caption, rng);
  });
  write_captions(ctx.out_dir / "captions_rewritten.tsv", lines);
  std::size_t total = 0, changed = 0;
  for (auto k : mentions) {
    total += k;
    changed += k > 0;
  }
  ordered_json r;
  r["captions"] = lines.size();
  r["captions_rewritten"] = changed;
  r["words_replaced"] = total;
  r["seconds"] = seconds_since(t0);
  ctx.report["stages"]["rewrite-captions"] = std::move(r);
}

void promote(const fs::path& staging, const fs::path& final_dir) {
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(staging)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& src : entries) {
    const fs::path dst = final_dir / src.filename();
    fs::remove_all(dst);
    fs::rename(src, dst);
  }
  fs::remove_all(staging);
}

}  // namespace

// ---- validation -------------------------------------------------------------

std::vector<std::string> validate_inputs(const PipelineConfig& cfg) {
  std::vector<std::string> problems;
  auto guard = [&](const std::string& what, auto&& fn) {
    try {
      fn();
      return true;
    } catch (const Error& e) {
      problems.push_back(what + ": " + std::string(error_code_name(e.code())) + ": " + e.message());
    } catch (const std::exception& e) {
      problems.push_back(what + ": " + e.what());
    }
    return false;
  };

  guard("config", [&] { cfg.validate(); });
  DatasetManifest m;
  if (!guard("manifest", [&] { m = read_manifest(cfg.manifest); })) return problems;

  FeatureTable features;
  std::vector<ScoreEntry> scores;
  const bool have_features = !m.features.empty() && guard("features", [&] { features = read_feature_file(m.features); });
  const bool have_scores = !m.scores.empty() && guard("scores", [&] { scores = read_score_file(m.scores); });
  if (m.features.empty()) problems.push_back("manifest: no feature file referenced");
  if (m.scores.empty()) problems.push_back("manifest: no score file referenced");

  std::set<std::string> all_segments;
  for (const auto& img : m.images) {
    all_segments.insert(img.segments.begin(), img.segments.end());
    guard("image " + img.image_id, [&] {
      const RasterImage px = io::read_png(img.path, 3);
      if (px.width() != img.width || px.height() != img.height)
        throw Error(ErrorCode::DimensionMismatch, "pixel extent differs from the manifest");
    });
    guard("segments of " + img.image_id, [&] { load_raw_segments(m, img); });
    for (ClassId c : img.labels) {
      guard("heatmap " + img.image_id + "/" + std::to_string(c), [&] {
        const CamHeatmap h = load_heatmap(m.heatmap_path(img.image_id, c));
        if (h.width != img.width || h.height != img.height)
          throw Error(ErrorCode::DimensionMismatch, "extent differs from the image");
      });
    }
  }
  if (have_features) {
    std::set<std::string> with_feature;
    for (const auto& id : features.segment_ids) {
      if (!all_segments.count(id)) problems.push_back("features: unknown segment id '" + id + "'");
      if (!with_feature.insert(id).second) problems.push_back("features: duplicate row for segment '" + id + "'");
    }
    for (const auto& id : all_segments)
      if (!with_feature.count(id)) problems.push_back("features: no row for segment '" + id + "'");
    for (float v : features.values)
      if (!std::isfinite(v)) {
        problems.push_back("features: non-finite value");
        break;
      }
  }
  if (have_scores) {
    std::set<std::string> with_score;
    for (const auto& s : scores) {
      if (!all_segments.count(s.segment_id)) problems.push_back("scores: unknown segment id '" + s.segment_id + "'");
      if (!(s.probability >= 0.0 && s.probability <= 1.0))
        problems.push_back("scores: probability outside [0,1] for '" + s.segment_id + "'");
      if (!m.find_category(s.class_id))
        problems.push_back("scores: class id " + std::to_string(s.class_id) + " is not a declared category");
      with_score.insert(s.segment_id);
    }
    for (const auto& id : all_segments)
      if (!with_score.count(id)) problems.push_back("scores: no score for segment '" + id + "'");
  }
  if (cfg.generated_manifest) {
    guard("pool", [&] {
      const auto gen = read_generated_manifest(*cfg.generated_manifest);
      std::optional<std::map<std::string, double>> rs;
      if (cfg.ranking_scores) rs = read_ranking_scores(*cfg.ranking_scores);
      assemble_background_pool({}, gen, rs, cfg.top_k, cfg.dup_factor);
      for (const auto& g : gen) {
        const fs::path p = resolve(cfg.generated_manifest->parent_path(), g.path);
        if (!fs::is_regular_file(p)) throw Error(ErrorCode::MissingAsset, "generated image not found: " + p.string());
      }
    });
  }
  if (cfg.captions) {
    guard("captions", [&] {
      validate_caption_tables(load_lexicon(cfg.lexicon), load_distractors(cfg.distractors));
      read_captions(*cfg.captions);
    });
  }
  if (!cfg.output_dir.empty() && fs::is_regular_file(cfg.output_dir / "annotations.json"))
    guard("annotations", [&] { read_coco(cfg.output_dir / "annotations.json"); });
  return problems;
}

// ---- Pipeline ---------------------------------------------------------------

void Pipeline::run(const std::string& stage) {
  failed_stage_.clear();
  const auto& stages = pipeline_stages();
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) {
    failed_stage_ = stage;
    throw StageError(stage, Error(ErrorCode::InvalidArgument, "unknown stage '" + stage + "'"));
  }
  const auto t0 = std::chrono::steady_clock::now();
  ordered_json report;
  report["stage"] = stage;
  if (config_.seed) report["seed"] = *config_.seed;
  report["workers"] = config_.workers;
  report["stages"] = ordered_json::object();

  if (stage == "validate") {
    const auto problems = validate_inputs(config_);
    report["problems"] = problems;
    report["valid"] = problems.empty();
    report_ = report.dump(2);
    if (!problems.empty()) {
      failed_stage_ = stage;
      throw StageError(stage, Error(ErrorCode::InvalidArgument,
                                    std::to_string(problems.size()) + " problem(s); first: " + problems.front()));
    }
    return;
  }

  try {
    config_.validate();
  } catch (const Error& e) {
    failed_stage_ = "config";
    throw StageError("config", e);
  }

  const fs::path final_dir = config_.output_dir;
  const fs::path staging = final_dir / ".staging";
  std::string current = stage;
  try {
    fs::create_directories(final_dir);
    fs::remove_all(staging);
    fs::create_directories(staging);
  } catch (const fs::filesystem_error& e) {
    failed_stage_ = stage;
    throw StageError(stage, Error(ErrorCode::IoError, e.what()));
  }

  StageContext ctx{config_, stage == "run" ? staging : final_dir, staging, report};
  try {
    if (stage == "run") {
      current = "extract";
      stage_extract(ctx);
      current = "pool";
      stage_pool(ctx);
      current = "paste";
      stage_paste(ctx);
    } else if (stage == "extract") {
      stage_extract(ctx);
    } else if (stage == "crops") {
      stage_crops(ctx);
    } else if (stage == "pool") {
      stage_pool(ctx);
    } else if (stage == "paste") {
      stage_paste(ctx);
    } else if (stage == "longtail") {
      stage_longtail(ctx, final_dir);
    } else if (stage == "rewrite-captions") {
      stage_captions(ctx);
    }
    report["seconds"] = seconds_since(t0);
    report_ = report.dump(2);
    {
      std::ofstream out(staging / "report.json", std::ios::binary);
      out << report_ << '\n';
    }
    current = "write";
    promote(staging, final_dir);
  } catch (const std::exception& ex) {
    failed_stage_ = current;
    const Error err = [&] {
      if (const auto* e = dynamic_cast<const Error*>(&ex)) return *e;
      return Error(ErrorCode::Internal, ex.what());
    }();
    report["failed_stage"] = current;
    report["error"] = err.what();
    report_ = report.dump(2);
    try {
      const fs::path q = final_dir / "quarantine" / stage;
      fs::remove_all(q);
      fs::create_directories(q.parent_path());
      fs::rename(staging, q);
      std::ofstream out(q / "report.json", std::ios::binary);
      out << report_ << '\n';
    } catch (const std::exception&) {
      // The original failure is the one worth reporting.
    }
    throw StageError(current, err);
  }
}

}  // namespace empaste
