#ifndef MTR_META_H
#define MTR_META_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MtrStatus {
  MTR_STATUS_OK = 0,
  MTR_STATUS_NULL_POINTER = 1,
  MTR_STATUS_INVALID_ARGUMENT = 2,
  MTR_STATUS_INVALID_DATA = 3,
  MTR_STATUS_DEGENERATE = 4,
  MTR_STATUS_IO = 5,
  MTR_STATUS_PANIC = 6,
} MtrStatus;

/**
 * Method identifiers; the numeric order is the tie-break order.
 */
typedef enum MtrMethod {
  MTR_METHOD_ST = 0,
  MTR_METHOD_SST = 1,
  MTR_METHOD_MOTC = 2,
  MTR_METHOD_ERC = 3,
} MtrMethod;

typedef enum MtrBaseKind {
  MTR_BASE_KIND_RIDGE = 0,
  MTR_BASE_KIND_KNN = 1,
} MtrBaseKind;

/**
 * Opaque dataset handle.
 */
typedef struct MtrDataset MtrDataset;

/**
 * Opaque random forest handle.
 */
typedef struct MtrForest MtrForest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length excluding the NUL.
 * Returns 0 when there is no error. `buf` may be NULL to query the length.
 */
size_t mtr_last_error_message(char *buf, size_t len);

/**
 * Static, NUL-terminated version string.
 */
const char *mtr_version(void);

size_t mtr_meta_feature_count(void);

/**
 * Canonical name of meta-feature `index` as a static string, or NULL when out of range.
 */
const char *mtr_meta_feature_name(size_t index);

/**
 * Builds a dataset from row-major `x` (n x m) and `y` (n x d).
 */
enum MtrStatus mtr_dataset_new(const double *x,
                               const double *y,
                               size_t n,
                               size_t m,
                               size_t d,
                               struct MtrDataset **out);

/**
 * Loads a CSV file whose last `n_targets` columns are targets.
 */
enum MtrStatus mtr_dataset_load_csv(const char *path, size_t n_targets, struct MtrDataset **out);

/**
 * Generates a synthetic dataset. `family`: 0 identity, 1 quadratic, 2 cubic, 3 mixed.
 */
enum MtrStatus mtr_dataset_generate(size_t n_instances,
                                    size_t n_features,
                                    size_t n_targets,
                                    size_t n_groups,
                                    double noise_pct,
                                    uint32_t family,
                                    uint64_t seed,
                                    struct MtrDataset **out);

void mtr_dataset_free(struct MtrDataset *ds);

/**
 * Writes rows, features and targets; any out-pointer may be NULL.
 */
enum MtrStatus mtr_dataset_shape(const struct MtrDataset *ds, size_t *n, size_t *m, size_t *d);

/**
 * Copies the row-major feature matrix (n x m) and target matrix (n x d);
 * either destination may be NULL.
 */
enum MtrStatus mtr_dataset_copy(const struct MtrDataset *ds, double *x_out, double *y_out);

/**
 * aRRMSE of `y_pred` against `y_true`, both row-major n x d.
 */
enum MtrStatus mtr_arrmse(const double *y_true,
                          const double *y_pred,
                          size_t n,
                          size_t d,
                          double *out);

/**
 * k-fold CV aRRMSE of ST, SST, MOTC and ERC (written to `scores[0..4]` in
 * that order) and the best method. `base` is an [`MtrBaseKind`] value;
 * `param` is the ridge penalty or the number of neighbours.
 */
enum MtrStatus mtr_cv_evaluate(const struct MtrDataset *ds,
                               uint32_t base,
                               double param,
                               size_t k,
                               uint64_t seed,
                               double *scores,
                               enum MtrMethod *best);

/**
 * The 58 meta-features in canonical order, written to `out[0..58]`.
 */
enum MtrStatus mtr_meta_features(const struct MtrDataset *ds, double *out);

/**
 * Fits a random forest on row-major `features` (n x m) with method labels
 * (0..=3). `bootstrap` = 0 grows every tree on the full sample.
 */
enum MtrStatus mtr_forest_fit(const double *features,
                              const uint32_t *labels,
                              size_t n,
                              size_t m,
                              size_t n_trees,
                              size_t mtry,
                              int32_t bootstrap,
                              uint64_t seed,
                              struct MtrForest **out);

/**
 * Predicts one method per row of `features` (n x m) into `out[0..n]`.
 */
enum MtrStatus mtr_forest_predict(const struct MtrForest *forest,
                                  const double *features,
                                  size_t n,
                                  size_t m,
                                  enum MtrMethod *out);

void mtr_forest_free(struct MtrForest *forest);

/**
 * Friedman test on row-major `scores` (n datasets x k systems, lower is better).
 */
enum MtrStatus mtr_friedman(const double *scores,
                            size_t n,
                            size_t k,
                            double alpha,
                            double *statistic,
                            bool *reject);

/**
 * Nemenyi critical difference for `k` systems over `n` datasets.
 */
enum MtrStatus mtr_nemenyi_cd(size_t k, size_t n, double alpha, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTR_META_H */
