#ifndef SEWER_ANOMALY_H
#define SEWER_ANOMALY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SaDetectorKind {
  SA_DETECTOR_KIND_OCSVM = 0,
  SA_DETECTOR_KIND_IFOREST = 1,
  SA_DETECTOR_KIND_LOF = 2,
  SA_DETECTOR_KIND_ENSEMBLE = 3,
} SaDetectorKind;

typedef enum SaStatus {
  SA_STATUS_OK = 0,
  SA_STATUS_NULL_POINTER = 1,
  SA_STATUS_INVALID_UTF8 = 2,
  SA_STATUS_PARSE = 3,
  SA_STATUS_CONFIG = 4,
  SA_STATUS_DIMENSION = 5,
  /**
   * Too few samples, no windows, or empty input.
   */
  SA_STATUS_DATA = 6,
  SA_STATUS_FORMAT_VERSION = 7,
  SA_STATUS_PANIC = 8,
} SaStatus;

typedef enum SaVerdict {
  SA_VERDICT_NORMAL = 0,
  SA_VERDICT_ABNORMAL = 1,
} SaVerdict;

/**
 * Opaque model handle.
 */
typedef struct SaModel SaModel;

/**
 * Confusion counts and rates with abnormal as the positive class.
 */
typedef struct SaReport {
  uint64_t true_pos;
  uint64_t false_pos;
  uint64_t false_neg;
  uint64_t true_neg;
  double precision;
  double recall;
  double f1;
} SaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *sa_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void sa_string_free(char *s);

/**
 * Parse a model document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SaStatus sa_model_from_json(const char *json, struct SaModel **out);

/**
 * Serialize a model; release the result with [`sa_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum SaStatus sa_model_to_json(const struct SaModel *model, char **out);

/**
 * Train on every clean normal window of a readings CSV.
 * `config_json` may be null for default hyperparameters.
 *
 * # Safety
 * String arguments must be NUL-terminated or (for `config_json`) null;
 * `out` must be writable.
 */
enum SaStatus sa_model_train_csv(const char *csv,
                                 size_t n_history,
                                 size_t p_future,
                                 enum SaDetectorKind kind,
                                 uint64_t seed,
                                 const char *config_json,
                                 struct SaModel **out);

/**
 * Feature length a model expects: `3 · n_history`. Zero for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t sa_model_dim(const struct SaModel *model);

/**
 * Classify one raw feature vector. `score` may be null; it receives NaN
 * for the ensemble, which has no single score.
 *
 * # Safety
 * `features` must point to `len` doubles; `model` must be a live handle.
 */
enum SaStatus sa_model_decide(const struct SaModel *model,
                              const double *features,
                              size_t len,
                              enum SaVerdict *verdict,
                              double *score);

/**
 * Evaluate a model on every window of a readings CSV.
 *
 * # Safety
 * `csv` must be NUL-terminated; `model` a live handle; `out` writable.
 */
enum SaStatus sa_model_evaluate_csv(const struct SaModel *model,
                                    const char *csv,
                                    struct SaReport *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void sa_model_free(struct SaModel *model);

/**
 * Generate a synthetic readings CSV from a JSON generator config; release the
 * result with [`sa_string_free`].
 *
 * # Safety
 * `config_json` must be NUL-terminated; `out` must be writable.
 */
enum SaStatus sa_generate_csv(const char *config_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEWER_ANOMALY_H */
