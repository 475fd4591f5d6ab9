#ifndef HTLAB_H
#define HTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HtlabStatus {
  HTLAB_STATUS_OK = 0,
  HTLAB_STATUS_NULL_POINTER = 1,
  HTLAB_STATUS_INVALID_ARGUMENT = 2,
  HTLAB_STATUS_DIMENSION_MISMATCH = 3,
  HTLAB_STATUS_SINGULAR = 4,
  HTLAB_STATUS_DIVERGED = 5,
  HTLAB_STATUS_TOO_LARGE = 6,
  HTLAB_STATUS_PANIC = 7,
} HtlabStatus;

typedef enum HtlabAlgorithm {
  HTLAB_ALGORITHM_SGD = 0,
  HTLAB_ALGORITHM_SGDM = 1,
} HtlabAlgorithm;

typedef enum HtlabNoiseTimeScale {
  /**
   * Per-step scale `zeta * eta^(1/alpha)`.
   */
  HTLAB_NOISE_TIME_SCALE_ETA = 0,
  /**
   * Per-step scale `zeta`.
   */
  HTLAB_NOISE_TIME_SCALE_UNIT = 1,
} HtlabNoiseTimeScale;

/**
 * Opaque training set.
 */
typedef struct HtlabDataset HtlabDataset;

/**
 * Opaque pair of datasets differing in one row.
 */
typedef struct HtlabPair HtlabPair;

typedef struct HtlabBoundInputs {
  double lipschitz;
  double zeta;
  double abs_sigma_sum;
  double y0_norm;
  size_t n;
  size_t d;
  double alpha;
  double p;
  double c_universal;
} HtlabBoundInputs;

/**
 * Optimizer settings. `zeta = 0` disables the noise.
 */
typedef struct HtlabOptimizerConfig {
  enum HtlabAlgorithm algorithm;
  double eta;
  double gamma;
  double beta;
  size_t steps;
  double alpha;
  double zeta;
  bool scale_match;
  enum HtlabNoiseTimeScale noise_time_scale;
} HtlabOptimizerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *htlab_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on the same thread.
 */
const char *htlab_last_error_message(void);

/**
 * Default bound inputs (`L = zeta = |sigma1+sigma2| = |Y0| = n = d = p = C = 1`, `alpha = 1.5`).
 */
struct HtlabBoundInputs htlab_bound_inputs_default(void);

/**
 * `exp(-(scale * u_norm)^alpha)`.
 */
enum HtlabStatus htlab_char_fn(double alpha, double scale, double u_norm, double *result);

/**
 * `count` isotropic stable vectors of dimension `d` into `result` (`count * d` values).
 */
enum HtlabStatus htlab_sample_isotropic(double alpha,
                                        double scale,
                                        size_t d,
                                        size_t count,
                                        uint64_t master_seed,
                                        uint64_t stream_id,
                                        double *result);

/**
 * Eigenvalues `(mu_minus, mu_plus)` of the momentum system for one Gram eigenvalue.
 */
enum HtlabStatus htlab_mu_eigenvalues(double kappa,
                                      double gamma,
                                      double *mu_minus,
                                      double *mu_plus);

enum HtlabStatus htlab_unit_ball_volume(size_t d, double *result);

enum HtlabStatus htlab_decay_factor(double x, double *result);

/**
 * Generalization bound at `rate_min` (sigma_min for SGDm, theta_min for SGD).
 */
enum HtlabStatus htlab_bound_generalization(const struct HtlabBoundInputs *inputs,
                                            double rate_min,
                                            double *result);

/**
 * `p`-Wasserstein stability bound at `rate_min`.
 */
enum HtlabStatus htlab_bound_wasserstein_p(const struct HtlabBoundInputs *inputs,
                                           double rate_min,
                                           double *result);

/**
 * Copy an `n x d` row-major matrix into a new dataset handle.
 */
enum HtlabStatus htlab_dataset_new(const double *values,
                                   size_t n,
                                   size_t d,
                                   struct HtlabDataset **dataset);

/**
 * Release a dataset handle; null is ignored.
 */
void htlab_dataset_free(struct HtlabDataset *dataset);

enum HtlabStatus htlab_dataset_shape(const struct HtlabDataset *dataset, size_t *n, size_t *d);

/**
 * Ascending eigenvalues of the Gram matrix into `result` (length `len >= d`).
 */
enum HtlabStatus htlab_dataset_gram_eigenvalues(const struct HtlabDataset *dataset,
                                                double *result,
                                                size_t len);

/**
 * Pair of `base` and a copy with row `changed_index` replaced by `new_row` (length `d`).
 */
enum HtlabStatus htlab_pair_new(const struct HtlabDataset *base,
                                size_t changed_index,
                                const double *new_row,
                                size_t d,
                                struct HtlabPair **pair);

/**
 * Release a pair handle; null is ignored.
 */
void htlab_pair_free(struct HtlabPair *pair);

/**
 * `rho = |x - x_hat| / n`.
 */
enum HtlabStatus htlab_pair_rho(const struct HtlabPair *pair, double *result);

/**
 * `sigma_min` (momentum system) and `theta_min` (Gram) over both datasets.
 */
enum HtlabStatus htlab_pair_sigma_theta_min(const struct HtlabPair *pair,
                                            double gamma,
                                            double *sigma_min,
                                            double *theta_min);

/**
 * Weights of `x x^T - x_hat x_hat^T = sigma1 v1 v1^T + sigma2 v2 v2^T`.
 */
enum HtlabStatus htlab_pair_rank_two(const struct HtlabPair *pair,
                                     double *sigma1,
                                     double *sigma2,
                                     bool *degenerate);

/**
 * Exact W1 between two scalar samples of size `m`.
 */
enum HtlabStatus htlab_w1_1d(const double *a, const double *b, size_t m, double *result);

/**
 * Exact `W_p` between two uniform clouds of `m` points in `R^k` (row-major).
 */
enum HtlabStatus htlab_wp_exact(const double *a,
                                const double *b,
                                size_t m,
                                size_t k,
                                double p,
                                double *result);

/**
 * Sliced W1 surrogate with `projections` random directions.
 */
enum HtlabStatus htlab_sliced_w1(const double *a,
                                 const double *b,
                                 size_t m,
                                 size_t k,
                                 size_t projections,
                                 uint64_t master_seed,
                                 double *result);

/**
 * Run the configured optimizer from `(theta, v)` in place (both length `d`).
 */
enum HtlabStatus htlab_run_to_end(const struct HtlabDataset *dataset,
                                  const struct HtlabOptimizerConfig *config,
                                  double *theta,
                                  double *v,
                                  size_t d,
                                  uint64_t master_seed,
                                  uint64_t stream_id);

/**
 * Distance between the two synchronously coupled chains after `config.steps`
 * steps from the origin.
 */
enum HtlabStatus htlab_run_coupled_pair(const struct HtlabPair *pair,
                                        const struct HtlabOptimizerConfig *config,
                                        uint64_t master_seed,
                                        uint64_t stream_id,
                                        double *distance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HTLAB_H */
