#ifndef MVRR_H
#define MVRR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  MVRR_STATUS_OK = 0,
  MVRR_STATUS_NULL_POINTER = 1,
  MVRR_STATUS_INVALID_ARGUMENT = 2,
  MVRR_STATUS_INVALID_DATA = 3,
  MVRR_STATUS_DIMENSION = 4,
  MVRR_STATUS_NUMERICAL = 5,
  MVRR_STATUS_PANIC = 6,
} MvrrStatus;

typedef enum {
  MVRR_FAMILY_GAUSSIAN = 0,
  MVRR_FAMILY_BINARY = 1,
} MvrrFamily;

/**
 * Opaque design handle.
 */
typedef struct MvrrDesign MvrrDesign;

/**
 * Opaque fit handle.
 */
typedef struct MvrrFit MvrrFit;

/**
 * Solver settings; obtain defaults from [`mvrr_options_default`].
 */
typedef struct {
  double rho0;
  double rho_growth;
  double rho_max;
  double tol;
  size_t max_iter;
  double ridge_lambda2;
  double rank_tol;
} MvrrOptions;

typedef struct {
  double lambda;
  size_t iterations;
  bool converged;
  double final_r_primal;
  double final_r_dual;
  double objective;
  size_t p;
  size_t q;
  size_t k;
} MvrrFitInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mvrr_version(void);

/**
 * Message of the most recent failure on this thread (empty after success).
 * The pointer stays valid until the next call into the library on this
 * thread.
 */
const char *mvrr_last_error_message(void);

MvrrOptions mvrr_options_default(void);

/**
 * Builds a design from a row-major `n x p` matrix whose columns form `k`
 * consecutive views of sizes `view_sizes[0..k]`.
 *
 * # Safety
 * `x` must point to `n * p` doubles, `view_sizes` to `k` values and `out`
 * to writable storage for one pointer.
 */
MvrrStatus mvrr_design_new(const double *x,
                           size_t n,
                           size_t p,
                           const size_t *view_sizes,
                           size_t k,
                           bool center,
                           bool scale,
                           MvrrDesign **out);

/**
 * # Safety
 * `design` must come from [`mvrr_design_new`] and not be freed twice.
 */
void mvrr_design_free(MvrrDesign *design);

/**
 * Writes the `k` default penalty weights for a response with `q` columns.
 *
 * # Safety
 * `out` must hold `k` doubles.
 */
MvrrStatus mvrr_design_weights(const MvrrDesign *design, size_t q, double *out);

/**
 * Smallest penalty level at which the fit is the intercept-only model.
 * `mask` (row-major `n x q`, nonzero = observed) and `weights` (length `k`)
 * may be null.
 *
 * # Safety
 * Buffers must have the stated lengths; `out` must be writable.
 */
MvrrStatus mvrr_lambda_max(const MvrrDesign *design,
                           const double *y,
                           size_t q,
                           const uint8_t *mask,
                           MvrrFamily family,
                           const double *weights,
                           double *out);

/**
 * Fits at penalty level `lambda`. `mask`, `weights` and `options` may be
 * null (complete data, default weights, default options).
 *
 * # Safety
 * Buffers must have the stated lengths; `out` must be writable.
 */
MvrrStatus mvrr_fit(const MvrrDesign *design,
                    const double *y,
                    size_t q,
                    const uint8_t *mask,
                    MvrrFamily family,
                    double lambda,
                    const double *weights,
                    const MvrrOptions *options,
                    MvrrFit **out);

/**
 * # Safety
 * `fit` must come from [`mvrr_fit`] and not be freed twice.
 */
void mvrr_fit_free(MvrrFit *fit);

/**
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
MvrrStatus mvrr_fit_info(const MvrrFit *fit, MvrrFitInfo *out);

/**
 * Copies the stacked `p x q` coefficient matrix (row-major) into `out`,
 * which must hold exactly `len = p * q` doubles.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
MvrrStatus mvrr_fit_coefficients(const MvrrFit *fit, double *out, size_t len);

/**
 * Copies the length-`q` intercept into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
MvrrStatus mvrr_fit_intercept(const MvrrFit *fit, double *out, size_t len);

/**
 * Predicts for `m` new raw rows (row-major `m x p`), replaying the
 * design's centering and scaling. Writes the linear predictor, or
 * probabilities when `probabilities` is set, into the `m x q` buffer `out`.
 *
 * # Safety
 * Buffers must have the stated lengths.
 */
MvrrStatus mvrr_fit_predict(const MvrrFit *fit,
                            const MvrrDesign *design,
                            const double *x_new,
                            size_t m,
                            bool probabilities,
                            double *out,
                            size_t len);

/**
 * Singular value soft-thresholding of a row-major `rows x cols` matrix at
 * level `tau`; the result goes to `out` (same size).
 *
 * # Safety
 * `m` and `out` must hold `rows * cols` doubles.
 */
MvrrStatus mvrr_svt(const double *m, size_t rows, size_t cols, double tau, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVRR_H */
