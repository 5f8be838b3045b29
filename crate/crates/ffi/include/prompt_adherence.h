#ifndef PROMPT_ADHERENCE_H
#define PROMPT_ADHERENCE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call. Values 1 to 4 match the CLI exit codes.
 */
typedef enum PaStatus {
  PA_STATUS_OK = 0,
  PA_STATUS_ERR_OTHER = 1,
  PA_STATUS_ERR_CONFIG = 2,
  PA_STATUS_ERR_DATA = 3,
  PA_STATUS_ERR_MATH = 4,
  /**
   * A required pointer argument was null.
   */
  PA_STATUS_ERR_NULL = 5,
  /**
   * The library panicked; the handle arguments should be considered lost.
   */
  PA_STATUS_ERR_PANIC = 6,
} PaStatus;

typedef enum PaMetric {
  PA_METRIC_FAD = 0,
  PA_METRIC_MMD = 1,
} PaMetric;

typedef enum PaAlternative {
  PA_ALTERNATIVE_GREATER = 0,
  PA_ALTERNATIVE_LESS = 1,
  PA_ALTERNATIVE_TWO_SIDED = 2,
} PaAlternative;

/**
 * Opaque embedding matrix.
 */
typedef struct PaMatrix PaMatrix;

/**
 * Opaque fitted projection.
 */
typedef struct PaProjection PaProjection;

typedef struct PaScore {
  double value;
  double d_matching;
  double d_nonmatching;
} PaScore;

typedef struct PaSignTest {
  double p_value;
  size_t n_effective;
  size_t n_positive;
} PaSignTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pa_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *pa_last_error_message(void);

/**
 * Copies a row-major `rows x cols` buffer into a new matrix.
 */
enum PaStatus pa_matrix_create(size_t rows,
                               size_t cols,
                               const float *data,
                               const char *backend_id,
                               struct PaMatrix **out_matrix);

/**
 * Reads an AEMB v1 file.
 */
enum PaStatus pa_matrix_read(const char *path, struct PaMatrix **out_matrix);

/**
 * Writes an AEMB v1 file.
 */
enum PaStatus pa_matrix_write(const struct PaMatrix *matrix, const char *path);

/**
 * Row count, or 0 for a null handle.
 */
size_t pa_matrix_rows(const struct PaMatrix *matrix);

/**
 * Column count, or 0 for a null handle.
 */
size_t pa_matrix_cols(const struct PaMatrix *matrix);

/**
 * Copies the row-major values into `buffer`, which must hold `len` floats
 * with `len >= rows * cols`.
 */
enum PaStatus pa_matrix_copy_data(const struct PaMatrix *matrix, float *buffer, size_t len);

void pa_matrix_free(struct PaMatrix *matrix);

/**
 * Distance of `candidate` to `reference` under `metric`.
 */
enum PaStatus pa_distance(enum PaMetric metric_id,
                          const struct PaMatrix *reference,
                          const struct PaMatrix *candidate,
                          double *out_distance);

/**
 * Adherence score of `candidate` given matching and non-matching references.
 * Both distances zero yields `PA_STATUS_ERR_MATH`.
 */
enum PaStatus pa_score(enum PaMetric metric_id,
                       const struct PaMatrix *matching,
                       const struct PaMatrix *nonmatching,
                       const struct PaMatrix *candidate,
                       struct PaScore *out_score);

/**
 * Dimensionality of the builtin embedder.
 */
size_t pa_builtin_dim(void);

/**
 * Embeds one mono window with the builtin embedder into a 1-row matrix.
 */
enum PaStatus pa_embed_builtin(const float *samples,
                               size_t len,
                               uint32_t sample_rate,
                               struct PaMatrix **out_matrix);

/**
 * Fits a whitening PCA with `k` components on the rows of `matrix`;
 * `k = 0` gives the identity projection.
 */
enum PaStatus pa_projection_fit(const struct PaMatrix *matrix,
                                size_t k,
                                struct PaProjection **out_projection);

enum PaStatus pa_projection_apply(const struct PaProjection *projection,
                                  const struct PaMatrix *matrix,
                                  struct PaMatrix **out_matrix);

/**
 * Fraction of the fit data's variance kept by the projection, or NaN for a
 * null handle.
 */
double pa_projection_explained_variance(const struct PaProjection *projection);

void pa_projection_free(struct PaProjection *projection);

/**
 * Writes a uniform random derangement of `0..n` into `out_perm` (length n).
 */
enum PaStatus pa_derangement(size_t n, uint64_t seed, size_t *out_perm);

/**
 * Exact sign test on `n` paired differences; zeros are dropped.
 */
enum PaStatus pa_sign_test(const double *diffs,
                           size_t n,
                           enum PaAlternative alternative,
                           struct PaSignTest *out_result);

/**
 * Probability that a perturbed score is below a matching score, ties 1/2.
 */
enum PaStatus pa_cles(const double *perturbed,
                      size_t n_perturbed,
                      const double *matching,
                      size_t n_matching,
                      double *out_cles);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROMPT_ADHERENCE_H */
