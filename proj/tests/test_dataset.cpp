#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "empaste/dataset.hpp"
#include "empaste/image_io.hpp"
#include "test_util.hpp"

using namespace empaste;

namespace {

// One image with one segment and one label, plus its heatmap.
nlohmann::ordered_json minimal_manifest(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "segments");
  std::filesystem::create_directories(dir / "heatmaps");
  io::write_png(dir / "a.png", RasterImage(8, 6, 3, 9));
  BinaryMask seg(8, 6);
  seg.set(2, 2);
  io::write_mask_png(dir / "segments" / "a_s1.png", seg);
  io::write_png(dir / "heatmaps" / "a_3.png", RasterImage(8, 6, 1, 128));
  nlohmann::ordered_json doc;
  doc["categories"] = nlohmann::ordered_json::array();
  for (int c = 1; c <= 20; ++c) doc["categories"].push_back({{"id", c}, {"name", "class" + std::to_string(c)}});
  doc["images"] = {{{"image_id", "a"}, {"path", "a.png"}, {"width", 8}, {"height", 6}, {"labels", {3}},
                    {"segments", {"s1"}}}};
  return doc;
}

std::filesystem::path save(const std::filesystem::path& dir, const nlohmann::ordered_json& doc) {
  const auto p = dir / "manifest.json";
  std::ofstream(p) << doc.dump(1);
  return p;
}

AnnotationSet random_set(Rng& rng, int n_images, int n_annotations) {
  AnnotationSet s;
  s.categories = {{1, "cat", "animal"}, {2, "car", "vehicle"}};
  for (int i = 0; i < n_images; ++i) s.images.push_back({i + 1, "scene_" + std::to_string(i) + ".png", 24, 20});
  for (int k = 0; k < n_annotations; ++k) {
    const auto img = static_cast<std::int64_t>(1 + rng.below(n_images));
    s.annotations.push_back(make_annotation(k + 1, img, 1 + ClassId(rng.below(2)), test::random_blob_mask(rng, 24, 20)));
  }
  return s;
}

}  // namespace

TEST_CASE("rle examples") {
  CHECK(rle_encode(BinaryMask(3, 3)).counts == std::vector<std::uint32_t>{9});
  CHECK(rle_encode(BinaryMask(2, 2, true)).counts == std::vector<std::uint32_t>{0, 4});
  // Column-major: pixel (1, 0) of a 2x2 is the third sample.
  BinaryMask m(2, 2);
  m.set(1, 0);
  CHECK(rle_encode(m).counts == std::vector<std::uint32_t>{2, 1, 1});
  CHECK_THROWS_AS_CODE(rle_decode({2, 2, {1, 2}}), ErrorCode::MalformedRle);
  CHECK_THROWS_AS_CODE(rle_decode({2, 2, {3, 2}}), ErrorCode::MalformedRle);
  CHECK(rle_decode({0, 0, {}}).size() == 0);
}

TEST_CASE("rle round trip on random masks") {
  Rng rng(81);
  for (int t = 0; t < 200; ++t) {
    const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
    BinaryMask m(w, h);
    const double p = rng.uniform();
    for (auto& b : m.bits()) b = rng.uniform() < p;
    const Rle r = rle_encode(m);
    CHECK(rle_decode(r) == m);
    std::uint64_t sum = 0;
    for (auto c : r.counts) sum += c;
    CHECK(sum == std::uint64_t(w) * h);
    for (std::size_t i = 1; i < r.counts.size(); ++i) CHECK(r.counts[i] > 0);
  }
}

TEST_CASE("manifest loading") {
  test::TempDir dir("manifest");
  auto doc = minimal_manifest(dir.path);
  DatasetManifest m = read_manifest(save(dir.path, doc));
  REQUIRE(m.images.size() == 1);
  CHECK(m.images[0].labels == std::vector<ClassId>{3});
  CHECK(m.categories.size() == 20);
  CHECK(m.segment_path("a", "s1") == dir.path / "segments" / "a_s1.png");
  CHECK(m.find_image("a") != nullptr);
  CHECK(m.find_category(21) == nullptr);

  SUBCASE("duplicate image id") {
    doc["images"].push_back(doc["images"][0]);
    doc["images"][1]["segments"] = nlohmann::json::array();
    CHECK_THROWS_AS_CODE(read_manifest(save(dir.path, doc)), ErrorCode::DuplicateImageId);
  }
  SUBCASE("undeclared label names the id") {
    doc["images"][0]["labels"] = {3, 99};
    try {
      read_manifest(save(dir.path, doc));
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
  }
  SUBCASE("missing assets") {
    doc["images"][0]["segments"] = {"s1", "s2"};
    CHECK_THROWS_AS_CODE(read_manifest(save(dir.path, doc)), ErrorCode::MissingAsset);
    doc["images"][0]["segments"] = {"s1"};
    doc["features"] = "nope.bin";
    CHECK_THROWS_AS_CODE(read_manifest(save(dir.path, doc)), ErrorCode::MissingAsset);
    doc.erase("features");
    std::filesystem::remove(dir.path / "heatmaps" / "a_3.png");
    CHECK_THROWS_AS_CODE(read_manifest(save(dir.path, doc)), ErrorCode::MissingAsset);
  }
  SUBCASE("syntax errors") {
    std::ofstream(dir.path / "bad.json") << "{\"images\": [";
    CHECK_THROWS_AS_CODE(read_manifest(dir.path / "bad.json"), ErrorCode::ParseError);
    doc["images"][0].erase("width");
    CHECK_THROWS_AS_CODE(read_manifest(save(dir.path, doc)), ErrorCode::ParseError);
  }
}

TEST_CASE("manifest write then read") {
  test::TempDir dir("manifest_rt");
  DatasetManifest m = read_manifest(save(dir.path, minimal_manifest(dir.path)));
  std::filesystem::create_directories(dir.path / "sub");
  write_manifest(dir.path / "sub" / "copy.json", m);
  DatasetManifest back = read_manifest(dir.path / "sub" / "copy.json");
  CHECK(back.images[0].path == m.images[0].path);
  CHECK(back.categories == m.categories);
  CHECK(back.segment_dir == m.segment_dir);
}

TEST_CASE("restrict manifest keeps only sampled classes") {
  test::TempDir dir("restrict");
  auto doc = minimal_manifest(dir.path);
  io::write_png(dir.path / "heatmaps" / "a_5.png", RasterImage(8, 6, 1, 128));
  doc["images"][0]["labels"] = {3, 5};
  DatasetManifest m = read_manifest(save(dir.path, doc));
  ClassIndex idx{{5, {{"a", "s1"}}}};
  DatasetManifest r = restrict_manifest(m, idx);
  REQUIRE(r.images.size() == 1);
  CHECK(r.images[0].labels == std::vector<ClassId>{5});
  CHECK(restrict_manifest(m, ClassIndex{}).images.empty());
}

TEST_CASE("coco output") {
  test::TempDir dir("coco");
  AnnotationSet empty;
  write_coco(empty, dir.path / "empty.json");
  std::ifstream in(dir.path / "empty.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("images").empty());
  CHECK(j.at("annotations").empty());
  CHECK(j.at("categories").empty());
  CHECK(read_coco(dir.path / "empty.json") == empty);

  AnnotationSet one;
  one.categories = {{1, "dog", "animal"}};
  one.images = {{1, "x.png", 10, 10}};
  BinaryMask m(10, 10);
  for (int y = 2; y < 5; ++y)
    for (int x = 3; x < 9; ++x) m.set(x, y);
  one.annotations = {make_annotation(1, 1, 1, m)};
  CHECK(one.annotations[0].area == rle_decode(one.annotations[0].segmentation).area());
  CHECK(one.annotations[0].bbox == std::array<int, 4>{3, 2, 6, 3});
  write_coco(one, dir.path / "one.json");
  CHECK(read_coco(dir.path / "one.json") == one);

  Rng rng(82);
  AnnotationSet big = random_set(rng, 40, 1000);
  write_coco(big, dir.path / "big.json");
  CHECK(read_coco(dir.path / "big.json") == big);
  CHECK(coco_to_string(big) == coco_to_string(read_coco(dir.path / "big.json")));
}

TEST_CASE("annotation set validation") {
  AnnotationSet s;
  s.categories = {{1, "dog", ""}};
  s.images = {{1, "x.png", 4, 4}};
  s.annotations = {make_annotation(1, 1, 1, BinaryMask(4, 4, true))};
  CHECK_NOTHROW(validate_annotation_set(s));
  auto bad = s;
  bad.annotations[0].image_id = 7;
  CHECK_THROWS_AS_CODE(validate_annotation_set(bad), ErrorCode::InvalidArgument);
  bad = s;
  bad.annotations[0].category_id = 2;
  CHECK_THROWS_AS_CODE(validate_annotation_set(bad), ErrorCode::InvalidArgument);
  bad = s;
  bad.annotations[0].area = 3;
  CHECK_THROWS_AS_CODE(validate_annotation_set(bad), ErrorCode::InvalidArgument);
  bad = s;
  bad.annotations[0].bbox = {0, 0, 4, 3};
  CHECK_THROWS_AS_CODE(validate_annotation_set(bad), ErrorCode::InvalidArgument);
  bad = s;
  bad.annotations.push_back(bad.annotations[0]);
  CHECK_THROWS_AS_CODE(validate_annotation_set(bad), ErrorCode::InvalidArgument);
  test::TempDir dir("coco_bad");
  std::ofstream(dir.path / "b.json") << "{\"images\":[],\"categories\":[],\"annotations\":[{\"id\":1}]}";
  CHECK_THROWS_AS_CODE(read_coco(dir.path / "b.json"), ErrorCode::ParseError);
  auto text = coco_to_string(s);
  text.replace(text.find("\"area\": 16"), 10, "\"area\": 15");
  std::ofstream(dir.path / "area.json") << text;
  CHECK_THROWS_AS_CODE(read_coco(dir.path / "area.json"), ErrorCode::MalformedFile);
}

TEST_CASE("foreground manifest round trip") {
  ForegroundSet a;
  a.class_id = 2;
  a.selections["i2"] = {"g5", 1.25, 0.75, {}};
  a.selections["i1"] = {"g1", 0.5, 0.9, {}};
  ForegroundSet b;
  b.class_id = 1;
  b.selections["i3"] = {"g9", 2.0, 0.3, {}};
  auto recs = foreground_records({a, b});
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].class_id == 1);
  CHECK(recs[1].image_id == "i1");
  test::TempDir dir("fg");
  write_foreground_manifest(dir.path / "fg.tsv", recs);
  CHECK(read_foreground_manifest(dir.path / "fg.tsv") == recs);
  ClassIndex idx = class_index_from(recs);
  CHECK(idx.at(2).size() == 2);
  CHECK(idx.at(1)[0] == MaskRef{"i3", "g9"});
}
