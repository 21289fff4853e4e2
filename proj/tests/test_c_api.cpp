#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "empaste/empaste.h"
#include "fixture.hpp"

namespace fs = std::filesystem;

namespace {

struct ScopedDir {
  fs::path path;
  explicit ScopedDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("empaste_capi_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScopedDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

empaste_mask* make_rect(int w, int h, int x0, int y0, int x1, int y1) {
  std::vector<uint8_t> bits(static_cast<size_t>(w) * h, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) bits[y * w + x] = 1;
  empaste_mask* m = nullptr;
  REQUIRE(empaste_mask_create(w, h, bits.data(), &m) == EMPASTE_OK);
  return m;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(empaste_status_name(EMPASTE_OK)) == "Ok");
  CHECK(std::string(empaste_status_name(EMPASTE_MALFORMED_RLE)) == "MalformedRle");
  CHECK(std::string(empaste_status_name(EMPASTE_MISSING_ASSET)) == "MissingAsset");
  CHECK(std::string(empaste_status_name(999)) == "Unknown");
  CHECK(std::string(empaste_version()) == "1.0.0");
}

TEST_CASE("mask geometry through the C API") {
  empaste_mask* m = make_rect(10, 10, 2, 2, 6, 6);
  size_t area = 0;
  CHECK(empaste_mask_area(m, &area) == EMPASTE_OK);
  CHECK(area == 16);
  CHECK(empaste_mask_width(m) == 10);
  double x = 0, y = 0, r = 0;
  CHECK(empaste_mask_centroid(m, &x, &y) == EMPASTE_OK);
  CHECK(x == doctest::Approx(3.5));
  CHECK(y == doctest::Approx(3.5));
  double d = 0;
  CHECK(empaste_mask_mean_distance(m, 3.5, 3.5, &d) == EMPASTE_OK);
  CHECK(d > 0.0);
  CHECK(empaste_mask_enclosing_circle(m, &x, &y, &r) == EMPASTE_OK);
  CHECK(r == doctest::Approx(std::sqrt(4.5)));
  CHECK(empaste_mask_inscribed_circle(m, &x, &y, &r) == EMPASTE_OK);
  CHECK(r == doctest::Approx(2.0));

  empaste_mask* e = nullptr;
  CHECK(empaste_mask_erode(m, 1, &e) == EMPASTE_OK);
  CHECK(empaste_mask_area(e, &area) == EMPASTE_OK);
  CHECK(area == 4);
  empaste_mask_destroy(e);
  CHECK(empaste_mask_erode(m, 3, &e) == EMPASTE_DEGENERATE_RESULT);
  CHECK(e == nullptr);
  CHECK(std::strlen(empaste_last_error()) > 0);
  CHECK(empaste_mask_area(m, &area) == EMPASTE_OK);
  CHECK(std::strlen(empaste_last_error()) == 0);
  empaste_mask_destroy(m);

  empaste_mask* empty = make_rect(4, 4, 0, 0, 0, 0);
  CHECK(empaste_mask_centroid(empty, &x, &y) == EMPASTE_EMPTY_MASK);
  empaste_mask_destroy(empty);
}

TEST_CASE("rle through the C API") {
  empaste_mask* m = make_rect(6, 5, 1, 1, 3, 4);
  size_t count = 0;
  CHECK(empaste_mask_rle_encode(m, nullptr, 0, &count) == EMPASTE_OK);
  std::vector<uint32_t> runs(count);
  CHECK(empaste_mask_rle_encode(m, runs.data(), runs.size(), &count) == EMPASTE_OK);
  CHECK(runs == std::vector<uint32_t>{6, 3, 2, 3, 16});
  empaste_mask* back = nullptr;
  CHECK(empaste_mask_rle_decode(6, 5, runs.data(), runs.size(), &back) == EMPASTE_OK);
  std::vector<uint8_t> a(30), b(30);
  CHECK(empaste_mask_copy_bits(m, a.data(), a.size()) == EMPASTE_OK);
  CHECK(empaste_mask_copy_bits(back, b.data(), b.size()) == EMPASTE_OK);
  CHECK(a == b);
  CHECK(empaste_mask_copy_bits(m, a.data(), 3) == EMPASTE_INVALID_ARGUMENT);
  empaste_mask_destroy(back);
  runs.back() = 1;
  CHECK(empaste_mask_rle_decode(6, 5, runs.data(), runs.size(), &back) == EMPASTE_MALFORMED_RLE);
  CHECK(back == nullptr);
  empaste_mask_destroy(m);
}

TEST_CASE("null arguments are rejected") {
  empaste_mask* m = nullptr;
  CHECK(empaste_mask_create(2, 2, nullptr, &m) == EMPASTE_INVALID_ARGUMENT);
  CHECK(empaste_mask_create(2, 2, nullptr, nullptr) == EMPASTE_INVALID_ARGUMENT);
  CHECK(empaste_mask_area(nullptr, nullptr) == EMPASTE_INVALID_ARGUMENT);
  CHECK(empaste_pipeline_open(nullptr, nullptr) == EMPASTE_INVALID_ARGUMENT);
  CHECK(empaste_pipeline_run(nullptr, "run") == EMPASTE_INVALID_ARGUMENT);
  CHECK(empaste_mask_width(nullptr) == -1);
  empaste_mask_destroy(nullptr);
  empaste_pipeline_close(nullptr);
}

TEST_CASE("pipeline through the C API") {
  ScopedDir dir("pipeline");
  empaste::testing::FixtureOptions o;
  o.num_images = 10;
  empaste::testing::write_fixture(dir.path, o);
  const std::string config = (dir.path / "config.json").string();

  CHECK(empaste_validate(config.c_str()) == EMPASTE_OK);
  empaste_pipeline* p = nullptr;
  CHECK(empaste_pipeline_open((dir.path / "missing.json").string().c_str(), &p) != EMPASTE_OK);
  CHECK(p == nullptr);
  REQUIRE(empaste_pipeline_open(config.c_str(), &p) == EMPASTE_OK);

  const std::string out = (dir.path / "capi_out").string();
  CHECK(empaste_pipeline_set_output_dir(p, out.c_str()) == EMPASTE_OK);
  CHECK(empaste_pipeline_set_workers(p, 0) == EMPASTE_INVALID_ARGUMENT);
  CHECK(empaste_pipeline_set_workers(p, 3) == EMPASTE_OK);
  CHECK(empaste_pipeline_set_seed(p, 99) == EMPASTE_OK);

  CHECK(empaste_pipeline_run(p, "paste") == EMPASTE_MISSING_ASSET);
  CHECK(std::string(empaste_pipeline_failed_stage(p)) == "paste");

  CHECK(empaste_pipeline_run(p, "run") == EMPASTE_OK);
  CHECK(std::string(empaste_pipeline_failed_stage(p)).empty());
  const std::string report = empaste_pipeline_report(p);
  CHECK(report.find("\"seed\": 99") != std::string::npos);
  CHECK(report.find("\"paste\"") != std::string::npos);
  CHECK(fs::is_regular_file(fs::path(out) / "annotations.json"));

  CHECK(empaste_pipeline_run(p, "no-such-stage") == EMPASTE_INVALID_ARGUMENT);
  empaste_pipeline_close(p);

  fs::remove_all(dir.path / "segments");
  CHECK(empaste_validate(config.c_str()) == EMPASTE_INVALID_ARGUMENT);
  CHECK(std::string(empaste_last_error()).find('\n') != std::string::npos);
}
