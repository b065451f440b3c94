#ifndef COLORGAN_H
#define COLORGAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ColorganStatus {
  COLORGAN_STATUS_OK = 0,
  COLORGAN_STATUS_NULL_POINTER = 1,
  COLORGAN_STATUS_INVALID_ARGUMENT = 2,
  COLORGAN_STATUS_NOT_FOUND = 3,
  COLORGAN_STATUS_DECODE = 4,
  COLORGAN_STATUS_SHAPE = 5,
  COLORGAN_STATUS_CONFIG = 6,
  COLORGAN_STATUS_EMPTY_DATASET = 7,
  COLORGAN_STATUS_CHECKPOINT = 8,
  COLORGAN_STATUS_MANIFEST = 9,
  COLORGAN_STATUS_NON_FINITE = 10,
  COLORGAN_STATUS_IO = 11,
  COLORGAN_STATUS_PANIC = 12,
} ColorganStatus;

/**
 * Opaque handle to a generator loaded from a checkpoint.
 */
typedef struct ColorganModel ColorganModel;

/**
 * Scores of one predicted image against its reference.
 */
typedef struct ColorganMetrics {
  double psnr;
  double ssim;
  double mse;
  double uqi;
  double vif;
} ColorganMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Text of the most recent error on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *colorgan_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *colorgan_version(void);

/**
 * Loads the generator stored in a training checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 * On success `*out` owns a model that must be released with
 * [`colorgan_model_free`].
 */
enum ColorganStatus colorgan_model_load(const char *path, struct ColorganModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`colorgan_model_load`] and not be used again.
 */
void colorgan_model_free(struct ColorganModel *model);

/**
 * Side length of the square images the model was trained on, or 0 for a
 * null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t colorgan_model_image_size(const struct ColorganModel *model);

/**
 * Colourizes an image. `channels` is 1 (gray) or 3 (RGB; only its
 * lightness is used). `out_rgb` receives `height * width * 3` bytes.
 *
 * # Safety
 * `model` must be a live handle, `pixels` must hold
 * `height * width * channels` bytes and `out_rgb` must have room for
 * `height * width * 3` bytes.
 */
enum ColorganStatus colorgan_colorize(struct ColorganModel *model,
                                      const uint8_t *pixels,
                                      size_t height,
                                      size_t width,
                                      size_t channels,
                                      uint8_t *out_rgb);

/**
 * Scores `predicted` against `reference`, both RGB of the same size.
 *
 * # Safety
 * Both buffers must hold `height * width * 3` bytes; `out` must be writable.
 */
enum ColorganStatus colorgan_metrics(const uint8_t *predicted,
                                     const uint8_t *reference,
                                     size_t height,
                                     size_t width,
                                     struct ColorganMetrics *out);

/**
 * Converts RGB to CIELAB (D65). `out_lab` receives `height * width * 3`
 * doubles, interleaved as L, a, b.
 *
 * # Safety
 * `rgb` must hold `height * width * 3` bytes and `out_lab` must have room
 * for `height * width * 3` doubles.
 */
enum ColorganStatus colorgan_rgb_to_lab(const uint8_t *rgb,
                                        size_t height,
                                        size_t width,
                                        double *out_lab);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLORGAN_H */
