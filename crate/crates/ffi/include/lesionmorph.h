/* Generated by cbindgen from crates/ffi; do not edit. */

#ifndef LESIONMORPH_H
#define LESIONMORPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of classes: 0 normal, 1 benign, 2 malignant.
#define LM_CLASSES 3

// Number of numeric feature columns.
#define LM_FEATURES 18

typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_IO = 3,
  LM_STATUS_DATA = 4,
  LM_STATUS_CORRUPT_MODEL = 5,
  LM_STATUS_INTERNAL = 6,
} LmStatus;

// A binary mask.
typedef struct LmMask LmMask;

// A trained classifier.
typedef struct LmModel LmModel;

// Extraction settings; start from [`lm_extract_options_default`].
typedef struct LmExtractOptions {
  // Square working grid side; 0 keeps the mask's own grid.
  uint32_t working_size;
  uint32_t k;
  double smooth_threshold;
  // 4 or 8.
  uint8_t connectivity;
  // Use the hull diameter instead of the ellipse major axis for roundness.
  bool hull_roundness;
  // Merge curvature runs globally instead of within a 2k window.
  bool global_suppression;
} LmExtractOptions;

// Feature columns in table order, plus the degenerate flag.
typedef struct LmFeatureVector {
  double perimeter;
  double height;
  double width;
  double area;
  uint32_t cspi;
  double lobulation_index;
  uint32_t ens;
  double aspect_ratio;
  double form_factor;
  double roundness;
  double solidity;
  double major_axis;
  double minor_axis;
  double enc;
  double ls_ratio;
  double convexity;
  double extent;
  double tca_ratio;
  bool degenerate;
} LmFeatureVector;

typedef struct LmClassMetrics {
  uint64_t tp;
  uint64_t tn;
  uint64_t fp;
  uint64_t fn_;
  double precision;
  double recall;
  double specificity;
  double f1;
} LmClassMetrics;

typedef struct LmMetricReport {
  struct LmClassMetrics per_class[LM_CLASSES];
  double accuracy;
  double macro_precision;
  double macro_recall;
  double macro_specificity;
  double macro_f1;
} LmMetricReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *lm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *lm_version(void);

// Column name of feature `index` (0..18), or null when out of range.
const char *lm_feature_name(size_t index);

struct LmExtractOptions lm_extract_options_default(void);

// Builds a mask from `width * height` row-major gray levels; pixels at or
// above `threshold` are foreground.
//
// # Safety
// `pixels` must point to `width * height` readable bytes; `out` must be
// writable.
enum LmStatus lm_mask_new(const uint8_t *pixels,
                          size_t width,
                          size_t height,
                          uint8_t threshold,
                          struct LmMask **out);

// Decodes a PNG (or any format the image decoder knows) and thresholds it.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LmStatus lm_mask_load_png(const char *path, uint8_t threshold, struct LmMask **out);

// # Safety
// `mask` must be null or a handle from this library not yet freed.
void lm_mask_free(struct LmMask *mask);

// Foreground pixel count and dimensions.
//
// # Safety
// `mask` must be a live handle; the out pointers must be writable.
enum LmStatus lm_mask_info(const struct LmMask *mask,
                           size_t *width,
                           size_t *height,
                           size_t *foreground);

// Computes the features of `mask`. `opts` may be null for the defaults.
// Degenerate masks succeed with `degenerate` set.
//
// # Safety
// `mask` must be a live handle; `opts` null or readable; `out` writable.
enum LmStatus lm_extract_features(const struct LmMask *mask,
                                  const struct LmExtractOptions *opts,
                                  struct LmFeatureVector *out);

// Loads a model file written by `lesionmorph train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LmStatus lm_model_load(const char *path, struct LmModel **out);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void lm_model_free(struct LmModel *model);

// Class probabilities, `n * 3` values row by row. Degenerate rows carry no
// shape and get probability 1 for normal.
//
// # Safety
// `model` must be a live handle, `rows` must hold `n` vectors and `probs`
// room for `n * 3` doubles.
enum LmStatus lm_model_predict_proba(const struct LmModel *model,
                                     const struct LmFeatureVector *rows,
                                     size_t n,
                                     double *probs);

// Predicted class index per row (0 normal, 1 benign, 2 malignant); ties go
// to the lower index.
//
// # Safety
// As [`lm_model_predict_proba`], with `labels` room for `n` values.
enum LmStatus lm_model_predict(const struct LmModel *model,
                               const struct LmFeatureVector *rows,
                               size_t n,
                               uint32_t *labels);

// 3x3 confusion counts, row-major with rows actual and columns predicted.
//
// # Safety
// `actual` and `predicted` must hold `n` labels; `counts` room for 9.
enum LmStatus lm_confusion(const uint32_t *actual,
                           const uint32_t *predicted,
                           size_t n,
                           uint64_t *counts);

// Per-class and macro metrics from 3x3 confusion counts. Rates with a zero
// denominator are reported as 0.
//
// # Safety
// `counts` must hold 9 values; `out` must be writable.
enum LmStatus lm_metrics_report(const uint64_t *counts, struct LmMetricReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LESIONMORPH_H */
