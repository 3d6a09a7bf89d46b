#ifndef SBA_H
#define SBA_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of coefficients [`sba_mfcc40`] writes.
 */
#define SBA_MFCC_DIM 40

/**
 * Result of every call. Codes 1 to 3 match the command-line exit codes.
 */
typedef enum SbaStatus {
  SBA_STATUS_OK = 0,
  SBA_STATUS_CONFIG_ERROR = 1,
  SBA_STATUS_DATA_ERROR = 2,
  SBA_STATUS_NUMERIC_ERROR = 3,
  SBA_STATUS_NULL_POINTER = 4,
  SBA_STATUS_PANIC = 5,
} SbaStatus;

/**
 * Opaque random forest.
 */
typedef struct SbaForest SbaForest;

/**
 * Opaque RBF-kernel SVM.
 */
typedef struct SbaSvm SbaSvm;

typedef struct SbaMetrics {
  double accuracy;
  double uar;
  double sensitivity;
  double specificity;
} SbaMetrics;

/**
 * Paired t-test. When `degenerate` is 1 all differences were equal and
 * nonzero; `t` and `p` are NaN and `mean` holds the common difference.
 */
typedef struct SbaTTest {
  double t;
  size_t df;
  double p;
  uint8_t degenerate;
  double mean;
} SbaTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library from the same thread.
 */
const char *sba_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sba_version(void);

/**
 * Rank-based AUC of positive against negative scores, ties counted half.
 *
 * # Safety
 * `pos` and `neg` must point to `n_pos` and `n_neg` readable doubles.
 */
enum SbaStatus sba_auc(const double *pos,
                       size_t n_pos,
                       const double *neg,
                       size_t n_neg,
                       double *result);

/**
 * Accuracy, UAR, sensitivity and specificity of hard predictions.
 *
 * # Safety
 * `labels_` and `predictions` must point to `n` readable bytes.
 */
enum SbaStatus sba_core_metrics(const uint8_t *labels_,
                                const uint8_t *predictions,
                                size_t n,
                                struct SbaMetrics *result);

/**
 * Two-sided paired t-test on per-fold differences.
 *
 * # Safety
 * `differences` must point to `n` readable doubles.
 */
enum SbaStatus sba_paired_ttest(const double *differences, size_t n, struct SbaTTest *result);

/**
 * Time-averaged 40-dim MFCCs of a 16 kHz mono signal in [-1, 1].
 *
 * # Safety
 * `samples` must point to `n` readable doubles and `result` to
 * [`SBA_MFCC_DIM`] writable doubles.
 */
enum SbaStatus sba_mfcc40(const double *samples, size_t n, double *result);

/**
 * Trains an RBF SVM with fixed `c` and `gamma` (no grid search).
 *
 * # Safety
 * `x` must point to `n * d` doubles, `y` to `n` bytes; `model` receives a
 * handle to release with [`sba_svm_free`].
 */
enum SbaStatus sba_svm_train(const double *x,
                             size_t n,
                             size_t d,
                             const uint8_t *y,
                             double c,
                             double gamma,
                             struct SbaSvm **model);

/**
 * Decision values; nonnegative means positive.
 *
 * # Safety
 * `model` must come from [`sba_svm_train`]; `x` holds `n * d` doubles and
 * `result` has room for `n`.
 */
enum SbaStatus sba_svm_decision(const struct SbaSvm *model,
                                const double *x,
                                size_t n,
                                size_t d,
                                double *result);

/**
 * # Safety
 * `model` must come from [`sba_svm_train`] and not be used afterwards.
 */
void sba_svm_free(struct SbaSvm *model);

/**
 * Trains a bootstrap random forest of Gini trees.
 *
 * # Safety
 * As [`sba_svm_train`]; release with [`sba_forest_free`].
 */
enum SbaStatus sba_forest_train(const double *x,
                                size_t n,
                                size_t d,
                                const uint8_t *y,
                                size_t n_trees,
                                uint64_t seed,
                                struct SbaForest **model);

/**
 * Positive vote fractions in [0, 1].
 *
 * # Safety
 * As [`sba_svm_decision`].
 */
enum SbaStatus sba_forest_score(const struct SbaForest *model,
                                const double *x,
                                size_t n,
                                size_t d,
                                double *result);

/**
 * # Safety
 * `model` must come from [`sba_forest_train`] and not be used afterwards.
 */
void sba_forest_free(struct SbaForest *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SBA_H */
