#ifndef SCENEPARSE_H
#define SCENEPARSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_ARGUMENT = 1,
  SP_STATUS_CONFIG_ERROR = 2,
  SP_STATUS_DATA_ERROR = 3,
  SP_STATUS_MODEL_ERROR = 4,
  SP_STATUS_PANIC = 5,
} SpStatus;

/**
 * A loaded model bundle.
 */
typedef struct SpModel SpModel;

/**
 * Scalar metrics of one evaluation.
 */
typedef struct SpEvalSummary {
  double global_acc;
  double class_acc;
  double mean_iou;
  double weighted_iou;
  uint64_t evaluated_pixels;
} SpEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sp_version(void);

/**
 * Copy the calling thread's last error message into `buf`. Returns the
 * buffer size needed (message length + 1); 1 when there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t sp_last_error(char *buf, size_t len);

/**
 * Load and validate a model bundle from a UTF-8 path.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum SpStatus sp_model_load(const char *path, struct SpModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must come from `sp_model_load` and not be used afterwards.
 */
void sp_model_free(struct SpModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum SpStatus sp_model_num_classes(const struct SpModel *model, size_t *out);

/**
 * Copy the name of class `index` into `buf`; `needed` (optional) receives
 * the size required including the terminator.
 *
 * # Safety
 * `model` must be valid, `buf` null or valid for `len` bytes, `needed` null
 * or valid.
 */
enum SpStatus sp_model_class_name(const struct SpModel *model,
                                  size_t index,
                                  char *buf,
                                  size_t len,
                                  size_t *needed);

/**
 * Label an interleaved RGB image (`3 * width * height` bytes, row-major).
 * `out_labels` receives `width * height` class indices.
 *
 * # Safety
 * Pointers must be valid for the stated sizes.
 */
enum SpStatus sp_predict_rgb(const struct SpModel *model,
                             const uint8_t *rgb,
                             size_t width,
                             size_t height,
                             int32_t *out_labels);

/**
 * Pixel metrics of one prediction/ground-truth pair; negative ground truth
 * is ignored.
 *
 * # Safety
 * `pred` and `gt` must be valid for `len` values and `out` valid.
 */
enum SpStatus sp_evaluate(const int32_t *pred,
                          const int32_t *gt,
                          size_t len,
                          size_t n_classes,
                          struct SpEvalSummary *out);

/**
 * GA fitness `alpha * error + beta * selected / total`.
 *
 * # Safety
 * `out` must be valid.
 */
enum SpStatus sp_fitness(double error,
                         size_t selected,
                         size_t total,
                         double alpha,
                         double beta,
                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENEPARSE_H */
