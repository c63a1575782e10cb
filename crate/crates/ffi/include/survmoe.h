#ifndef SURVMOE_H
#define SURVMOE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SurvmoeStatus {
  SURVMOE_STATUS_OK = 0,
  SURVMOE_STATUS_NULL_POINTER = 1,
  SURVMOE_STATUS_INVALID_ARGUMENT = 2,
  SURVMOE_STATUS_IO_ERROR = 3,
  SURVMOE_STATUS_FORMAT_ERROR = 4,
  SURVMOE_STATUS_NUMERIC_ERROR = 5,
  SURVMOE_STATUS_UNDEFINED_METRIC = 6,
  SURVMOE_STATUS_PANIC = 7,
} SurvmoeStatus;

// Opaque handle to a loaded checkpoint.
typedef struct SurvmoeModel SurvmoeModel;

// Loads a checkpoint file. On success `*out` owns a handle that must be
// released with [`survmoe_model_free`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SurvmoeStatus survmoe_model_load(const char *path, struct SurvmoeModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from [`survmoe_model_load`] and not be used afterwards.
void survmoe_model_free(struct SurvmoeModel *model);

// Sizes needed to allocate buffers. Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable.
enum SurvmoeStatus survmoe_model_dims(const struct SurvmoeModel *model,
                                      size_t *num_features,
                                      size_t *num_bins,
                                      size_t *num_feature_experts,
                                      size_t *num_hazard_experts);

// Imputes and standardizes raw covariates with the training-split
// statistics stored in the checkpoint. NaN marks a missing value.
//
// # Safety
// `raw` and `out` must hold `n_rows * n_cols` values.
enum SurvmoeStatus survmoe_model_preprocess(const struct SurvmoeModel *model,
                                            const double *raw,
                                            size_t n_rows,
                                            size_t n_cols,
                                            double *out);

// Predicts hazards and, when `survival` is non-null, survival curves for
// preprocessed rows. Both outputs are `n_rows × num_bins`.
//
// # Safety
// `x` must hold `n_rows * n_cols` values; outputs `n_rows * num_bins`.
enum SurvmoeStatus survmoe_model_predict(const struct SurvmoeModel *model,
                                         const double *x,
                                         size_t n_rows,
                                         size_t n_cols,
                                         double *hazard,
                                         double *survival);

// Routing probabilities for preprocessed rows: `pi_feat` is
// `n_rows × K`, `pi_haz` is `n_rows × num_bins × L`.
//
// # Safety
// Buffers must have the sizes above.
enum SurvmoeStatus survmoe_model_routing(const struct SurvmoeModel *model,
                                         const double *x,
                                         size_t n_rows,
                                         size_t n_cols,
                                         double *pi_feat,
                                         double *pi_haz);

// Harrell's C-index. `event` entries are 0 (censored) or 1.
//
// # Safety
// Inputs must hold `n` values; `out` must be writable.
enum SurvmoeStatus survmoe_cindex(const double *risk,
                                  const size_t *tau,
                                  const uint8_t *event,
                                  size_t n,
                                  double *out);

// Time-dependent C-index at bin `horizon` from survival curves
// (`n × num_bins`).
//
// # Safety
// `survival` must hold `n * num_bins` values, the others `n`.
enum SurvmoeStatus survmoe_td_cindex(const double *survival,
                                     size_t n,
                                     size_t num_bins,
                                     const size_t *tau,
                                     const uint8_t *event,
                                     size_t horizon,
                                     double *out);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t survmoe_last_error(char *buf, size_t len);

#endif  /* SURVMOE_H */
