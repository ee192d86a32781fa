#ifndef OTFLOW_H
#define OTFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum {
  OTFLOW_STATUS_OK = 0,
  OTFLOW_STATUS_NULL_POINTER = 1,
  OTFLOW_STATUS_INVALID_ARGUMENT = 2,
  OTFLOW_STATUS_DIMENSION_MISMATCH = 3,
  OTFLOW_STATUS_INVALID_CONFIG = 4,
  OTFLOW_STATUS_NON_FINITE = 5,
  OTFLOW_STATUS_IO = 6,
  OTFLOW_STATUS_FORMAT = 7,
  OTFLOW_STATUS_UNAVAILABLE = 8,
  OTFLOW_STATUS_INTERNAL = 9,
} OtflowStatus;

/**
 * Opaque full-resolution flow, optionally with confidence and occlusion.
 */
typedef struct OtflowFlow OtflowFlow;

/**
 * Pipeline settings. Start from [`otflow_config_default`].
 */
typedef struct {
  double epsilon;
  size_t sinkhorn_max_iters;
  double sinkhorn_tol;
  double dustbin_score;
  size_t window_radius;
  size_t refine_steps;
  double conf_threshold;
  /**
   * Nonzero selects the joint two-channel residual head.
   */
  uint8_t coupled_refinement;
  size_t feature_dim;
} OtflowConfig;

/**
 * Evaluation metrics. `epe_nonocc` is NaN when no visibility mask was given.
 */
typedef struct {
  double epe_all;
  double epe_nonocc;
  double outlier_1px;
  double outlier_3px;
  double outlier_5px;
  double fl_all;
} OtflowMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *otflow_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *otflow_version(void);

/**
 * Writes the default configuration to `out`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one config.
 */
OtflowStatus otflow_config_default(OtflowConfig *out);

/**
 * Estimates flow from `img1` to `img2`. Images are row-major, interleaved,
 * `channels` 1 or 3, values in `[0, 1]`; both sides must be multiples of 4.
 * `cfg` may be null for defaults.
 *
 * # Safety
 * Image pointers must reference `width * height * channels` doubles, `cfg`
 * must be null or valid, `out` must be writable.
 */
OtflowStatus otflow_estimate(const double *img1,
                             const double *img2,
                             size_t width,
                             size_t height,
                             size_t channels,
                             const OtflowConfig *cfg,
                             OtflowFlow **out);

/**
 * Wraps interleaved `(u, v)` values as a full-resolution flow handle.
 *
 * # Safety
 * `uv` must reference `2 * width * height` doubles; `out` must be writable.
 */
OtflowStatus otflow_flow_new(const double *uv, size_t width, size_t height, OtflowFlow **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `flow` must be null or a handle from this library not yet freed.
 */
void otflow_flow_free(OtflowFlow *flow);

/**
 * Writes the flow size to `width` and `height`.
 *
 * # Safety
 * `flow` must be a live handle; outputs must be writable.
 */
OtflowStatus otflow_flow_size(const OtflowFlow *flow, size_t *width, size_t *height);

/**
 * Copies interleaved `(u, v)` into `uv`, which holds `len = 2 * w * h`
 * doubles.
 *
 * # Safety
 * `flow` must be live and `uv` writable for `len` doubles.
 */
OtflowStatus otflow_flow_copy(const OtflowFlow *flow, double *uv, size_t len);

/**
 * Copies the confidence map (`w * h` doubles). Only estimated flows carry
 * one; others return `Unavailable`.
 *
 * # Safety
 * `flow` must be live and `out` writable for `len` doubles.
 */
OtflowStatus otflow_flow_confidence(const OtflowFlow *flow, double *out, size_t len);

/**
 * Copies the occlusion map (`w * h` doubles, 1 = visible).
 *
 * # Safety
 * `flow` must be live and `out` writable for `len` doubles.
 */
OtflowStatus otflow_flow_occlusion(const OtflowFlow *flow, double *out, size_t len);

/**
 * Reads a Middlebury `.flo` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
OtflowStatus otflow_read_flo(const char *path, OtflowFlow **out);

/**
 * Writes a Middlebury `.flo` file.
 *
 * # Safety
 * `flow` must be live; `path` must be a NUL-terminated string.
 */
OtflowStatus otflow_write_flo(const OtflowFlow *flow, const char *path);

/**
 * Reads a KITTI 16-bit flow PNG; its validity mask is used by
 * [`otflow_evaluate`] when the handle is passed as ground truth.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
OtflowStatus otflow_read_kitti_png(const char *path, OtflowFlow **out);

/**
 * Compares `pred` against `gt`. `visible` is an optional `w * h` byte mask
 * (nonzero = not occluded) enabling `epe_nonocc`.
 *
 * # Safety
 * Handles must be live, `visible` null or `w * h` bytes, `out` writable.
 */
OtflowStatus otflow_evaluate(const OtflowFlow *pred,
                             const OtflowFlow *gt,
                             const uint8_t *visible,
                             OtflowMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTFLOW_H */
