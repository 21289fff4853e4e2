#include "empaste/empaste.h"

#include <cstring>
#include <new>
#include <string>

#include "empaste/core.hpp"
#include "empaste/dataset.hpp"
#include "empaste/geometry.hpp"
#include "empaste/pipeline.hpp"
#include "empaste/proposals.hpp"

struct empaste_pipeline {
  empaste::Pipeline pipeline;
  std::string failed_stage;
};

struct empaste_mask {
  empaste::BinaryMask mask;
};

namespace {

thread_local std::string g_last_error;

int fail(int status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

int ok() {
  g_last_error.clear();
  return EMPASTE_OK;
}

// Runs fn and converts any exception into a status code.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return ok();
  } catch (const empaste::Error& e) {
    return fail(static_cast<int>(e.code()), e.message());
  } catch (const std::bad_alloc&) {
    return fail(EMPASTE_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(EMPASTE_INTERNAL, e.what());
  } catch (...) {
    return fail(EMPASTE_INTERNAL, "unknown failure");
  }
}

#define EMPASTE_REQUIRE(cond, what) \
  if (!(cond)) return fail(EMPASTE_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* empaste_status_name(int status) {
  if (status < 0 || status > EMPASTE_INTERNAL) return "Unknown";
  return empaste::error_code_name(static_cast<empaste::ErrorCode>(status)).data();
}

const char* empaste_last_error(void) { return g_last_error.c_str(); }

const char* empaste_version(void) { return "1.0.0"; }

int empaste_pipeline_open(const char* config_path, empaste_pipeline** out) {
  EMPASTE_REQUIRE(config_path && out, "config_path and out must be non-null");
  *out = nullptr;
  return guarded([&] { *out = new empaste_pipeline{empaste::Pipeline(empaste::load_pipeline_config(config_path)), {}}; });
}

void empaste_pipeline_close(empaste_pipeline* pipeline) { delete pipeline; }

int empaste_pipeline_set_seed(empaste_pipeline* pipeline, uint64_t seed) {
  EMPASTE_REQUIRE(pipeline, "pipeline is null");
  pipeline->pipeline.config().seed = seed;
  return ok();
}

int empaste_pipeline_set_workers(empaste_pipeline* pipeline, unsigned workers) {
  EMPASTE_REQUIRE(pipeline, "pipeline is null");
  EMPASTE_REQUIRE(workers >= 1, "workers must be >= 1");
  pipeline->pipeline.config().workers = workers;
  return ok();
}

int empaste_pipeline_set_output_dir(empaste_pipeline* pipeline, const char* dir) {
  EMPASTE_REQUIRE(pipeline && dir && *dir, "pipeline and dir must be non-null and non-empty");
  return guarded([&] { pipeline->pipeline.config().output_dir = std::filesystem::absolute(dir); });
}

int empaste_pipeline_run(empaste_pipeline* pipeline, const char* stage) {
  EMPASTE_REQUIRE(pipeline && stage, "pipeline and stage must be non-null");
  pipeline->failed_stage.clear();
  const int status = guarded([&] { pipeline->pipeline.run(stage); });
  if (status != EMPASTE_OK) pipeline->failed_stage = pipeline->pipeline.failed_stage();
  return status;
}

const char* empaste_pipeline_failed_stage(const empaste_pipeline* pipeline) {
  return pipeline ? pipeline->failed_stage.c_str() : "";
}

const char* empaste_pipeline_report(const empaste_pipeline* pipeline) {
  return pipeline ? pipeline->pipeline.report_json().c_str() : "";
}

int empaste_validate(const char* config_path) {
  EMPASTE_REQUIRE(config_path, "config_path is null");
  std::vector<std::string> problems;
  const int status = guarded([&] { problems = empaste::validate_inputs(empaste::load_pipeline_config(config_path)); });
  if (status != EMPASTE_OK) return status;
  if (problems.empty()) return ok();
  std::string joined;
  for (const auto& p : problems) joined += p + "\n";
  return fail(EMPASTE_INVALID_ARGUMENT, joined);
}

int empaste_mask_create(int width, int height, const uint8_t* bits, empaste_mask** out) {
  EMPASTE_REQUIRE(out, "out is null");
  *out = nullptr;
  EMPASTE_REQUIRE(width >= 0 && height >= 0, "mask extent must be non-negative");
  EMPASTE_REQUIRE(bits || width == 0 || height == 0, "bits is null");
  return guarded([&] {
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::vector<std::uint8_t> v(bits, bits + n);
    *out = new empaste_mask{empaste::BinaryMask(width, height, std::move(v))};
  });
}

void empaste_mask_destroy(empaste_mask* mask) { delete mask; }

int empaste_mask_width(const empaste_mask* mask) { return mask ? mask->mask.width() : -1; }

int empaste_mask_height(const empaste_mask* mask) { return mask ? mask->mask.height() : -1; }

int empaste_mask_copy_bits(const empaste_mask* mask, uint8_t* out, size_t capacity) {
  EMPASTE_REQUIRE(mask && (out || mask->mask.size() == 0), "mask and out must be non-null");
  EMPASTE_REQUIRE(capacity >= mask->mask.size(), "output buffer too small");
  const auto bits = mask->mask.bits();
  std::copy(bits.begin(), bits.end(), out);
  return ok();
}

int empaste_mask_area(const empaste_mask* mask, size_t* area) {
  EMPASTE_REQUIRE(mask && area, "mask and area must be non-null");
  *area = mask->mask.area();
  return ok();
}

int empaste_mask_centroid(const empaste_mask* mask, double* x, double* y) {
  EMPASTE_REQUIRE(mask && x && y, "mask, x and y must be non-null");
  return guarded([&] {
    const auto c = empaste::mask_centroid(mask->mask);
    *x = c.x;
    *y = c.y;
  });
}

int empaste_mask_mean_distance(const empaste_mask* mask, double x, double y, double* out) {
  EMPASTE_REQUIRE(mask && out, "mask and out must be non-null");
  return guarded([&] { *out = empaste::mean_pixel_distance(mask->mask, {x, y}); });
}

int empaste_mask_erode(const empaste_mask* mask, int radius, empaste_mask** out) {
  EMPASTE_REQUIRE(mask && out, "mask and out must be non-null");
  *out = nullptr;
  EMPASTE_REQUIRE(radius >= 0, "radius must be >= 0");
  return guarded([&] { *out = new empaste_mask{empaste::erode_mask(mask->mask, radius)}; });
}

int empaste_mask_inscribed_circle(const empaste_mask* mask, double* cx, double* cy, double* radius) {
  EMPASTE_REQUIRE(mask && cx && cy && radius, "mask and outputs must be non-null");
  return guarded([&] {
    const auto c = empaste::max_inscribed_circle(mask->mask);
    *cx = c.center.x;
    *cy = c.center.y;
    *radius = c.radius;
  });
}

int empaste_mask_enclosing_circle(const empaste_mask* mask, double* cx, double* cy, double* radius) {
  EMPASTE_REQUIRE(mask && cx && cy && radius, "mask and outputs must be non-null");
  return guarded([&] {
    const auto c = empaste::min_enclosing_circle(mask->mask);
    *cx = c.center.x;
    *cy = c.center.y;
    *radius = c.radius;
  });
}

int empaste_mask_rle_encode(const empaste_mask* mask, uint32_t* runs, size_t capacity, size_t* count) {
  EMPASTE_REQUIRE(mask && count, "mask and count must be non-null");
  EMPASTE_REQUIRE(runs || capacity == 0, "runs is null");
  return guarded([&] {
    const auto rle = empaste::rle_encode(mask->mask);
    *count = rle.counts.size();
    std::copy_n(rle.counts.begin(), std::min(capacity, rle.counts.size()), runs);
  });
}

int empaste_mask_rle_decode(int width, int height, const uint32_t* runs, size_t count, empaste_mask** out) {
  EMPASTE_REQUIRE(out, "out is null");
  *out = nullptr;
  EMPASTE_REQUIRE(runs || count == 0, "runs is null");
  return guarded([&] {
    empaste::Rle rle{width, height, std::vector<std::uint32_t>(runs, runs + count)};
    *out = new empaste_mask{empaste::rle_decode(rle)};
  });
}

}  // extern "C"
