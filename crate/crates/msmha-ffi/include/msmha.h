/* C interface to the msmha video-transformer library. */

#ifndef MSMHA_H
#define MSMHA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this interface.
typedef enum MsmhaStatus {
  MSMHA_STATUS_OK = 0,
  // A required pointer argument was null.
  MSMHA_STATUS_NULL_POINTER = 1,
  // An output buffer is too small for the result.
  MSMHA_STATUS_BUFFER_TOO_SMALL = 2,
  MSMHA_STATUS_SHAPE_ERROR = 3,
  MSMHA_STATUS_ARGUMENT_ERROR = 4,
  MSMHA_STATUS_CONFIG_ERROR = 5,
  MSMHA_STATUS_FORMAT_ERROR = 6,
  MSMHA_STATUS_IO_ERROR = 7,
  MSMHA_STATUS_VALIDATION_ERROR = 8,
  // A string argument was not valid UTF-8.
  MSMHA_STATUS_UTF8_ERROR = 9,
  // The library panicked; state may be inconsistent.
  MSMHA_STATUS_INTERNAL_PANIC = 10,
} MsmhaStatus;

// A loaded classifier: parameters plus their configuration.
typedef struct MsmhaModel MsmhaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *msmha_version(void);

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *msmha_last_error_message(void);

// Write the pyramid head widths for `(feature_width, head_count)` into
// `out_dims`, which must hold at least `head_count` entries.
//
// # Safety
// `out_dims` must point to `out_len` writable `uint32_t`s.
enum MsmhaStatus msmha_head_schedule(uint32_t feature_width,
                                     uint32_t head_count,
                                     uint32_t *out_dims,
                                     size_t out_len);

// Analytic parameter count of the pyramid layout at `(feature_width,
// head_count)`.
//
// # Safety
// `out_count` must point to a writable `uint64_t`.
enum MsmhaStatus msmha_pyramid_param_count(uint32_t feature_width,
                                           uint32_t head_count,
                                           bool include_bias,
                                           uint64_t *out_count);

// Load a checkpoint from `path` into a fresh model handle.
//
// # Safety
// `path` must be a NUL-terminated string; `out_model` must be writable.
// A returned handle must be released with [`msmha_model_free`].
enum MsmhaStatus msmha_model_load(const char *path, struct MsmhaModel **out_model);

// Release a handle returned by [`msmha_model_load`]. Null is a no-op.
//
// # Safety
// `model` must have come from [`msmha_model_load`] and not be freed twice.
void msmha_model_free(struct MsmhaModel *model);

// Classify one frame sequence.
//
// `frames` holds `T * F` values row-major (frame by frame); the posterior
// (`class_count` probabilities summing to one) is written to
// `out_posterior`.
//
// # Safety
// `frames` must hold `frames_len` readable floats and `out_posterior`
// `out_len` writable floats.
enum MsmhaStatus msmha_model_classify(const struct MsmhaModel *model,
                                      const float *frames,
                                      size_t frames_len,
                                      float *out_posterior,
                                      size_t out_len);

// Decision-level late fusion over per-stream posteriors.
//
// `scores` holds `stream_count * class_count` probabilities row-major (one
// normalized posterior per stream). The fused label is written to
// `out_label`; when `out_score_sum` is non-null the summed scores
// (`class_count` values) are written there too.
//
// # Safety
// `scores` must hold `stream_count * class_count` readable floats;
// `out_label` must be writable; `out_score_sum` is either null or holds
// `class_count` writable floats.
enum MsmhaStatus msmha_late_fuse(const float *scores,
                                 size_t stream_count,
                                 size_t class_count,
                                 uint32_t *out_label,
                                 float *out_score_sum);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSMHA_H */
