#ifndef EMPASTE_EMPASTE_H
#define EMPASTE_EMPASTE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(EMPASTE_BUILDING_LIBRARY)
#    define EMPASTE_API __declspec(dllexport)
#  else
#    define EMPASTE_API __declspec(dllimport)
#  endif
#else
#  define EMPASTE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Values are stable. */
typedef enum empaste_status {
  EMPASTE_OK = 0,
  EMPASTE_INVALID_ARGUMENT = 1,
  EMPASTE_EMPTY_MASK = 2,
  EMPASTE_DEGENERATE_RESULT = 3,
  EMPASTE_DIMENSION_MISMATCH = 4,
  EMPASTE_UNKNOWN_SEGMENT_ID = 5,
  EMPASTE_MALFORMED_FILE = 6,
  EMPASTE_EMPTY_ACTIVATION = 7,
  EMPASTE_TOO_FEW_SAMPLES = 8,
  EMPASTE_PLACEMENT_IMPOSSIBLE = 9,
  EMPASTE_NO_FREE_SPACE = 10,
  EMPASTE_NON_CONVERGENCE = 11,
  EMPASTE_EMPTY_POOL = 12,
  EMPASTE_MISSING_SCORE = 13,
  EMPASTE_INVALID_SPEC = 14,
  EMPASTE_MALFORMED_RLE = 15,
  EMPASTE_PARSE_ERROR = 16,
  EMPASTE_MISSING_ASSET = 17,
  EMPASTE_DUPLICATE_IMAGE_ID = 18,
  EMPASTE_IO_ERROR = 19,
  EMPASTE_INTERNAL = 20
} empaste_status;

EMPASTE_API const char* empaste_status_name(int status);

/* Message of the last failed call on this thread; "" after a success. */
EMPASTE_API const char* empaste_last_error(void);

EMPASTE_API const char* empaste_version(void);

/* ---- pipeline ---------------------------------------------------------- */

typedef struct empaste_pipeline empaste_pipeline;

EMPASTE_API int empaste_pipeline_open(const char* config_path, empaste_pipeline** out);
EMPASTE_API void empaste_pipeline_close(empaste_pipeline* pipeline);

EMPASTE_API int empaste_pipeline_set_seed(empaste_pipeline* pipeline, uint64_t seed);
EMPASTE_API int empaste_pipeline_set_workers(empaste_pipeline* pipeline, unsigned workers);
EMPASTE_API int empaste_pipeline_set_output_dir(empaste_pipeline* pipeline, const char* dir);

/* stage: extract, crops, pool, paste, longtail, rewrite-captions, validate, run. */
EMPASTE_API int empaste_pipeline_run(empaste_pipeline* pipeline, const char* stage);

/* Stage that raised the last failure of this handle, or "". */
EMPASTE_API const char* empaste_pipeline_failed_stage(const empaste_pipeline* pipeline);

/* JSON report of the last run; owned by the handle, valid until the next
   run or close. */
EMPASTE_API const char* empaste_pipeline_report(const empaste_pipeline* pipeline);

/* Checks config, manifest and assets. On failure the problem list is in
   empaste_last_error(), one per line. */
EMPASTE_API int empaste_validate(const char* config_path);

/* ---- masks ------------------------------------------------------------- */

typedef struct empaste_mask empaste_mask;

/* bits: width*height bytes, row-major, nonzero = foreground. */
EMPASTE_API int empaste_mask_create(int width, int height, const uint8_t* bits, empaste_mask** out);
EMPASTE_API void empaste_mask_destroy(empaste_mask* mask);

EMPASTE_API int empaste_mask_width(const empaste_mask* mask);
EMPASTE_API int empaste_mask_height(const empaste_mask* mask);
EMPASTE_API int empaste_mask_copy_bits(const empaste_mask* mask, uint8_t* out, size_t capacity);
EMPASTE_API int empaste_mask_area(const empaste_mask* mask, size_t* area);
EMPASTE_API int empaste_mask_centroid(const empaste_mask* mask, double* x, double* y);
EMPASTE_API int empaste_mask_mean_distance(const empaste_mask* mask, double x, double y, double* out);
EMPASTE_API int empaste_mask_erode(const empaste_mask* mask, int radius, empaste_mask** out);
EMPASTE_API int empaste_mask_inscribed_circle(const empaste_mask* mask, double* cx, double* cy, double* radius);
EMPASTE_API int empaste_mask_enclosing_circle(const empaste_mask* mask, double* cx, double* cy, double* radius);

/* Column-major run lengths starting with background. Writes up to capacity
   runs and stores the full run count in *count, so a first call with
   capacity 0 sizes the buffer. */
EMPASTE_API int empaste_mask_rle_encode(const empaste_mask* mask, uint32_t* runs, size_t capacity, size_t* count);
EMPASTE_API int empaste_mask_rle_decode(int width, int height, const uint32_t* runs, size_t count, empaste_mask** out);

#ifdef __cplusplus
}
#endif

#endif
