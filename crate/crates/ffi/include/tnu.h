#ifndef TNU_H
#define TNU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TnuStatus {
  TNU_STATUS_OK = 0,
  // Bad arguments, malformed sample or out-of-range `nu`.
  TNU_STATUS_INVALID_INPUT = 1,
  // The law lies outside the existence domain.
  TNU_STATUS_DOMAIN_VIOLATION = 2,
  // Non-convergence or numerical breakdown.
  TNU_STATUS_NUMERICAL = 3,
  TNU_STATUS_NULL_POINTER = 4,
  TNU_STATUS_BUFFER_TOO_SMALL = 5,
  // A Rust panic was caught at the boundary.
  TNU_STATUS_INTERNAL = 6,
} TnuStatus;

// Opaque weighted sample.
typedef struct TnuSample TnuSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tnu_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length, 0 if none.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t tnu_last_error_message(char *buf, size_t len);

// Builds a sample from `n` points of dimension `dim` stored row-major in
// `points`. `weights` may be null for equal weights; otherwise it holds `n`
// nonnegative values that are normalized.
//
// # Safety
// `points` must hold `n * dim` values, `weights` (if non-null) `n` values.
enum TnuStatus tnu_sample_new(size_t dim,
                              size_t n,
                              const double *points,
                              const double *weights,
                              struct TnuSample **out);

// Releases a sample. Null is ignored.
//
// # Safety
// `sample` must come from `tnu_sample_new` and not be freed twice.
void tnu_sample_free(struct TnuSample *sample);

// Dimension of the sample, 0 for null.
//
// # Safety
// `sample` must be null or a live handle.
size_t tnu_sample_dim(const struct TnuSample *sample);

// Existence check for the scatter functional with constant `a0`
// (`a0 = nu + d`). Writes membership and the mass margin to the threshold.
//
// # Safety
// `sample` must be a live handle; outputs must be valid pointers.
enum TnuStatus tnu_check_scatter_domain(const struct TnuSample *sample,
                                        double a0,
                                        bool *member,
                                        double *margin);

// Existence check for the location-scatter functional (affine subspaces).
//
// # Safety
// As for `tnu_check_scatter_domain`.
enum TnuStatus tnu_check_locscat_domain(const struct TnuSample *sample,
                                        double a0,
                                        bool *member,
                                        double *margin);

// Scatter functional `A_nu`. `tol <= 0` and `max_iter == 0` select the
// defaults. Writes the `d x d` matrix into `a_out`.
//
// # Safety
// `a_out` must hold `a_len` values; `iterations` may be null.
enum TnuStatus tnu_solve_scatter(const struct TnuSample *sample,
                                 double nu,
                                 double tol,
                                 size_t max_iter,
                                 double *a_out,
                                 size_t a_len,
                                 size_t *iterations);

// Location-scatter functional `(mu_nu, Sigma_nu)`, `nu > 1`.
//
// # Safety
// `mu_out` must hold `mu_len` values and `sigma_out` `sigma_len` values.
enum TnuStatus tnu_solve_locscatter(const struct TnuSample *sample,
                                    double nu,
                                    double tol,
                                    size_t max_iter,
                                    double *mu_out,
                                    size_t mu_len,
                                    double *sigma_out,
                                    size_t sigma_len);

// One-dimensional extended functional. Never fails on domain grounds:
// a dominant atom yields `(atom, 0)` with `boundary` set.
//
// # Safety
// Outputs must be valid pointers.
enum TnuStatus tnu_solve_oned(const struct TnuSample *sample,
                              double nu,
                              double *mu,
                              double *sigma,
                              bool *boundary);

// Asymptotic covariance of the scatter functional in half-vectorized
// coordinates (`k = d(d+1)/2`, row-major `k x k`) and its numerical rank.
//
// # Safety
// `cov_out` must hold `cov_len` values; `rank` may be null.
enum TnuStatus tnu_asymptotic_cov_scatter(const struct TnuSample *sample,
                                          double nu,
                                          double *cov_out,
                                          size_t cov_len,
                                          size_t *rank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TNU_H */
