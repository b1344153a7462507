#ifndef HSISEL_H
#define HSISEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsiStatus {
  HSI_STATUS_OK = 0,
  // A required pointer argument was null.
  HSI_STATUS_NULL_POINTER = 1,
  // Argument out of range, mismatched shapes or invalid configuration.
  HSI_STATUS_INVALID_ARGUMENT = 2,
  // File could not be read or written.
  HSI_STATUS_IO = 3,
  // Malformed header, raster, image or JSON.
  HSI_STATUS_FORMAT = 4,
  // Data too small or degenerate for the requested computation.
  HSI_STATUS_INSUFFICIENT_DATA = 5,
  // Caller-provided output buffer is too small.
  HSI_STATUS_BUFFER_TOO_SMALL = 6,
  HSI_STATUS_PANIC = 7,
} HsiStatus;

typedef struct HsiConfusion HsiConfusion;

typedef struct HsiCube HsiCube;

typedef struct HsiMask HsiMask;

typedef struct HsiPcaModel HsiPcaModel;

typedef struct HsiSelection HsiSelection;

// Per-class scores in percent.
typedef struct HsiClassMetrics {
  double iou;
  double f1;
  double precision;
  double recall;
  uint64_t support;
  // Non-zero when the class has no ground-truth and no predicted pixels.
  int32_t absent;
} HsiClassMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into the library on this
// thread.
const char *hsi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *hsi_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void hsi_string_free(char *s);

// Load an ENVI cube from its `.hdr` path.
//
// # Safety
// `header_path` must be a NUL-terminated string; `out` a writable pointer.
enum HsiStatus hsi_cube_load(const char *header_path, struct HsiCube **out);

// Build a cube from `height * width * bands` values in `(y, x, band)` order.
//
// # Safety
// `wavelengths` must hold `bands` values and `data` `height * width * bands`.
enum HsiStatus hsi_cube_from_data(size_t width,
                                  size_t height,
                                  size_t bands,
                                  const double *wavelengths,
                                  const float *data,
                                  struct HsiCube **out);

// # Safety
// `cube` must be a live handle; the outputs writable or null.
enum HsiStatus hsi_cube_dims(const struct HsiCube *cube,
                             size_t *width,
                             size_t *height,
                             size_t *bands);

// # Safety
// `cube` must be null or a handle not yet freed.
void hsi_cube_free(struct HsiCube *cube);

// Load a PGM (P5, maxval 255) label mask.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a writable pointer.
enum HsiStatus hsi_mask_load(const char *path, struct HsiMask **out);

// # Safety
// `labels` must hold `width * height` bytes, row-major.
enum HsiStatus hsi_mask_from_labels(size_t width,
                                    size_t height,
                                    const uint8_t *labels,
                                    struct HsiMask **out);

// # Safety
// `mask` must be null or a handle not yet freed.
void hsi_mask_free(struct HsiMask *mask);

// Select bands from `count` cube/mask pairs. `config_json` may be null for
// defaults; otherwise it is a selection config object (unknown keys are
// rejected).
//
// # Safety
// `cubes` and `masks` must each hold `count` live handles.
enum HsiStatus hsi_select_bands(const struct HsiCube *const *cubes,
                                const struct HsiMask *const *masks,
                                size_t count,
                                const char *config_json,
                                uint64_t seed,
                                struct HsiSelection **out);

// Number of chosen bands.
//
// # Safety
// `sel` must be a live handle.
enum HsiStatus hsi_selection_len(const struct HsiSelection *sel, size_t *len);

// Copy the chosen band indices, in selection order, into `bands`.
//
// # Safety
// `bands` must have room for `capacity` values.
enum HsiStatus hsi_selection_bands(const struct HsiSelection *sel, size_t *bands, size_t capacity);

// Selection as JSON; free with [`hsi_string_free`].
//
// # Safety
// `sel` must be a live handle; `out` writable.
enum HsiStatus hsi_selection_to_json(const struct HsiSelection *sel, char **out);

// # Safety
// `sel` must be null or a handle not yet freed.
void hsi_selection_free(struct HsiSelection *sel);

// Fit `k` components on `samples_per_cube` pixels drawn from each cube.
//
// # Safety
// `cubes` must hold `count` live handles.
enum HsiStatus hsi_pca_fit(const struct HsiCube *const *cubes,
                           size_t count,
                           size_t k,
                           bool standardize,
                           size_t samples_per_cube,
                           uint64_t seed,
                           struct HsiPcaModel **out);

// Parse a model previously written as JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out` writable.
enum HsiStatus hsi_pca_from_json(const char *json, struct HsiPcaModel **out);

// Model as JSON; free with [`hsi_string_free`].
//
// # Safety
// `model` must be a live handle; `out` writable.
enum HsiStatus hsi_pca_to_json(const struct HsiPcaModel *model, char **out);

// Copy the explained variance of each component into `values`.
//
// # Safety
// `values` must have room for `capacity` doubles.
enum HsiStatus hsi_pca_explained_variance(const struct HsiPcaModel *model,
                                          double *values,
                                          size_t capacity);

// # Safety
// `model` must be null or a handle not yet freed.
void hsi_pca_free(struct HsiPcaModel *model);

// Render interleaved 8-bit RGB from a 3-band selection into `rgb`
// (`width * height * 3` bytes), using percentile normalization.
//
// # Safety
// Handles must be live; `rgb` must have room for `capacity` bytes.
enum HsiStatus hsi_render_selection(const struct HsiCube *cube,
                                    const struct HsiSelection *sel,
                                    double half_width,
                                    uint8_t *rgb,
                                    size_t capacity);

// Render interleaved 8-bit RGB from the first three principal components.
//
// # Safety
// Handles must be live; `rgb` must have room for `capacity` bytes.
enum HsiStatus hsi_render_pca(const struct HsiCube *cube,
                              const struct HsiPcaModel *model,
                              uint8_t *rgb,
                              size_t capacity);

// # Safety
// `out` must be writable.
enum HsiStatus hsi_confusion_new(size_t num_classes, struct HsiConfusion **out);

// Add one predicted/ground-truth mask pair. On error the matrix is
// unchanged.
//
// # Safety
// All handles must be live.
enum HsiStatus hsi_confusion_accumulate(struct HsiConfusion *cm,
                                        const struct HsiMask *pred,
                                        const struct HsiMask *gt);

// # Safety
// `cm` must be a live handle; `out` writable.
enum HsiStatus hsi_confusion_class_metrics(const struct HsiConfusion *cm,
                                           uint8_t class_id,
                                           struct HsiClassMetrics *out);

// # Safety
// `cm` must be null or a handle not yet freed.
void hsi_confusion_free(struct HsiConfusion *cm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSISEL_H */
