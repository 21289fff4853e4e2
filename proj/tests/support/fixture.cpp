#include "fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "empaste/core.hpp"
#include "empaste/image_io.hpp"
#include "empaste/proposals.hpp"
#include "empaste/rng.hpp"

namespace empaste::testing {

namespace fs = std::filesystem;

namespace {

const char* kClassNames[] = {"aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair", "cow",
                             "dining table", "dog", "horse", "motorbike", "person", "potted plant", "sheep", "sofa",
                             "train", "tv monitor"};

struct Blob {
  double cx, cy, rx, ry;
};

BinaryMask draw(const Blob& b, int size) {
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = (x - b.cx) / b.rx;
      const double dy = (y - b.cy) / b.ry;
      if (dx * dx + dy * dy <= 1.0) m.set(x, y);
    }
  return m;
}

Blob random_blob(Rng& rng, int size) {
  const double rx = rng.uniform(5.0, 9.0);
  const double ry = rng.uniform(5.0, 9.0);
  return {rng.uniform(rx + 1, size - rx - 2), rng.uniform(ry + 1, size - ry - 2), rx, ry};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

void write_fixture(const fs::path& dir, const FixtureOptions& o) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "segments");
  fs::create_directories(dir / "heatmaps");
  fs::create_directories(dir / "generated");
  Rng rng(o.seed);
  const int S = o.image_size;
  const int d = o.feature_dim;

  // Class means sit on well-separated axes; distractor features share one
  // loose cloud around the origin.
  std::vector<std::vector<double>> mu(o.num_classes, std::vector<double>(d, 0.0));
  for (int c = 0; c < o.num_classes; ++c) mu[c][c % d] = 6.0 + c / d;

  nlohmann::ordered_json manifest;
  manifest["categories"] = nlohmann::ordered_json::array();
  for (int c = 0; c < o.num_classes; ++c)
    manifest["categories"].push_back({{"id", c + 1}, {"name", kClassNames[c % 20]}});
  manifest["segment_dir"] = "segments";
  manifest["heatmap_dir"] = "heatmaps";
  manifest["features"] = "features.bin";
  manifest["scores"] = "scores.tsv";
  manifest["images"] = nlohmann::ordered_json::array();

  FeatureTable features;
  features.dim = static_cast<std::size_t>(d);
  std::vector<ScoreEntry> scores;
  std::string captions;
  int next_segment = 0;

  for (int i = 0; i < o.num_images; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "img%03d", i);
    const std::string image_id = idbuf;
    std::vector<int> labels{i % o.num_classes};
    if (rng.uniform() < 0.3) labels.push_back((i + 1 + static_cast<int>(rng.below(o.num_classes - 1))) % o.num_classes);

    RasterImage img(S, S, 3);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        img.at(x, y, 0) = static_cast<std::uint8_t>(40 + x);
        img.at(x, y, 1) = static_cast<std::uint8_t>(60 + y);
        img.at(x, y, 2) = static_cast<std::uint8_t>(90 + (x ^ y) % 32);
      }

    std::vector<std::string> seg_ids;
    auto add_segment = [&](const BinaryMask& m, const std::vector<double>& feat, int owner_class) {
      const std::string sid = "g" + std::to_string(next_segment++);
      io::write_mask_png(dir / "segments" / (image_id + "_" + sid + ".png"), m);
      seg_ids.push_back(sid);
      features.segment_ids.push_back(sid);
      for (double v : feat) features.values.push_back(static_cast<float>(v));
      for (int c = 0; c < o.num_classes; ++c) {
        const double p = c == owner_class ? rng.uniform(0.6, 0.95) : rng.uniform(0.0, 0.3);
        scores.push_back({sid, c + 1, p});
      }
    };

    for (int c : labels) {
      const Blob b = random_blob(rng, S);
      const BinaryMask m = draw(b, S);
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if (m.at(x, y)) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(200 - 30 * c);
            img.at(x, y, 1) = static_cast<std::uint8_t>(50 + 40 * c);
            img.at(x, y, 2) = static_cast<std::uint8_t>(120);
          }
      std::vector<double> feat(d);
      for (int k = 0; k < d; ++k) feat[k] = mu[c][k] + 0.3 * rng.normal();
      add_segment(m, feat, c);

      io::Gray16 heat{S, S, std::vector<std::uint16_t>(static_cast<std::size_t>(S) * S)};
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          const double r2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
          heat.values[static_cast<std::size_t>(y) * S + x] = static_cast<std::uint16_t>(std::lround(65535.0 * std::exp(-r2 / 72.0)));
        }
      io::write_png16(dir / "heatmaps" / (image_id + "_" + std::to_string(c + 1) + ".png"), heat);
    }
    for (int k = 0; k < o.distractors_per_image; ++k) {
      const BinaryMask m = draw(random_blob(rng, S), S);
      std::vector<double> feat(d);
      for (int j = 0; j < d; ++j) feat[j] = 2.0 * rng.normal();
      add_segment(m, feat, -1);
    }
    io::write_png(dir / "images" / (image_id + ".png"), img);

    std::vector<int> ids;
    for (int c : labels) ids.push_back(c + 1);
    manifest["images"].push_back({{"image_id", image_id},
                                  {"path", "images/" + image_id + ".png"},
                                  {"width", S},
                                  {"height", S},
                                  {"labels", ids},
                                  {"segments", seg_ids}});
    captions += image_id + "\ta " + std::string(kClassNames[labels[0] % 20]) + " next to two people\n";
  }

  write_feature_file(dir / "features.bin", features);
  write_score_file(dir / "scores.tsv", scores);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "captions.tsv", captions);

  std::string gen_manifest, gen_scores;
  for (int g = 0; g < o.generated_groups; ++g) {
    for (int k = 0; k < o.generated_per_group; ++k) {
      const std::string name = "gen_" + std::to_string(g) + "_" + std::to_string(k) + ".png";
      RasterImage bg(S, S, 3, static_cast<std::uint8_t>(100 + 20 * k));
      io::write_png(dir / "generated" / name, bg);
      gen_manifest += "cap" + std::to_string(g) + "\t" + name + "\n";
      gen_scores += name + "\t" + std::to_string(0.1 * ((k * 7 + g) % 10)) + "\n";
    }
  }
  write_text(dir / "generated" / "manifest.tsv", gen_manifest);
  write_text(dir / "generated" / "scores.tsv", gen_scores);

  nlohmann::ordered_json config;
  config["manifest"] = "manifest.json";
  config["output_dir"] = "out";
  config["seed"] = 7;
  config["workers"] = 2;
  config["paste"] = {{"mode", "random"}, {"n_p", 4}, {"blend", "gaussian"}, {"selection", "uniform"}};
  config["pool"] = {{"top_k", 2}, {"dup_factor", 2}, {"generated_manifest", "generated/manifest.tsv"},
                    {"scores", "generated/scores.tsv"}};
  config["longtail"] = {{"b", 6}, {"max_count", 10}, {"min_count", 1}};
  config["captions"] = {{"input", "captions.tsv"}};
  write_text(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace empaste::testing
