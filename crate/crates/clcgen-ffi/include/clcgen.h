#ifndef CLCGEN_H
#define CLCGEN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClcNoiseMode {
  CLC_NOISE_MODE_FIXED = 0,
  CLC_NOISE_MODE_INDEPENDENT = 1,
} ClcNoiseMode;

typedef enum ClcStatus {
  CLC_STATUS_OK = 0,
  CLC_STATUS_NULL_POINTER = 1,
  CLC_STATUS_INVALID_ARGUMENT = 2,
  CLC_STATUS_SHAPE_MISMATCH = 3,
  CLC_STATUS_NUMERIC_DIVERGENCE = 4,
  CLC_STATUS_MISSING_INPUT = 5,
  CLC_STATUS_IO = 6,
  CLC_STATUS_PARSE = 7,
  CLC_STATUS_UNDEFINED_METRIC = 8,
  /**
   * The frame callback asked generation to stop.
   */
  CLC_STATUS_CANCELLED = 9,
  CLC_STATUS_INTERNAL = 10,
} ClcStatus;

/**
 * A trained toy model together with its noise schedule.
 */
typedef struct ClcModel ClcModel;

/**
 * Sampling settings; see [`clcgen_feedback_default`].
 */
typedef struct ClcFeedbackConfig {
  double beta;
  enum ClcNoiseMode noise_mode;
  uint64_t seed;
  double cfg_scale;
} ClcFeedbackConfig;

/**
 * Receives each generated frame (`width * height * 3` bytes, valid only
 * during the call). Returning nonzero stops generation.
 */
typedef int (*ClcFrameCallback)(size_t index, const uint8_t *rgb, void *user);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t clcgen_last_error(char *buf, size_t len);

/**
 * Default sampling settings: gain 0.05, fixed noise, seed 0, no guidance.
 */
struct ClcFeedbackConfig clcgen_feedback_default(void);

/**
 * Loads a checkpoint written by `clcgen train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ClcStatus clcgen_model_load(const char *path, struct ClcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`clcgen_model_load`] that has not
 * been freed.
 */
void clcgen_model_free(struct ClcModel *model);

/**
 * Frame size the model generates.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClcStatus clcgen_model_frame_size(const struct ClcModel *model, size_t *width, size_t *height);

/**
 * Animates the appearance of `source` along the motion of `n_driving`
 * driving frames, producing `n_frames` frames (the driving frames loop).
 * Frames are handed to `callback` as they are produced, so memory use does
 * not depend on `n_frames`.
 *
 * # Safety
 * `source` must hold one frame and `driving` `n_driving` frames of the
 * model's size; `config` must be valid.
 */
enum ClcStatus clcgen_animate(const struct ClcModel *model,
                              const struct ClcFeedbackConfig *config,
                              const uint8_t *source,
                              const uint8_t *driving,
                              size_t n_driving,
                              size_t n_frames,
                              ClcFrameCallback callback,
                              void *user);

/**
 * `out = (1 - beta) z_t + beta z0_hat`, elementwise over `len` values.
 *
 * # Safety
 * Each pointer must address `len` values; `out` may alias neither input.
 */
enum ClcStatus clcgen_feedback_update(const double *z_t,
                                      const double *z0_hat,
                                      size_t len,
                                      double beta,
                                      double *out);

/**
 * Temporal jitter error between two clips of `n_frames` frames.
 *
 * # Safety
 * `real` and `gen` must each hold `n_frames * width * height * 3` bytes.
 */
enum ClcStatus clcgen_tje(const uint8_t *real,
                          const uint8_t *gen,
                          size_t n_frames,
                          size_t width,
                          size_t height,
                          size_t delta,
                          double *out);

/**
 * PSNR of two frames. With `wrapping` nonzero the error is accumulated in
 * wrapping 8-bit arithmetic, as some evaluation scripts do. Identical
 * frames give infinity.
 *
 * # Safety
 * `a` and `b` must each hold `width * height * 3` bytes.
 */
enum ClcStatus clcgen_psnr(const uint8_t *a,
                           const uint8_t *b,
                           size_t width,
                           size_t height,
                           int wrapping,
                           double *out);

/**
 * Keypoint distance rescaled by the detection fraction.
 *
 * # Safety
 * `out` must be valid.
 */
enum ClcStatus clcgen_akd_adjust(double raw, double detection_fraction, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLCGEN_H */
