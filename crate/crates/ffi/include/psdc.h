#ifndef PSDC_H
#define PSDC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  PSDC_VARIANT_BCDD = 0,
  PSDC_VARIANT_BDD = 1,
  PSDC_VARIANT_W_REDIST = 2,
  PSDC_VARIANT_N_LOWRANK = 3,
} PsdcVariant;

typedef enum {
  PSDC_STATUS_OK = 0,
  PSDC_STATUS_NULL_POINTER = 1,
  PSDC_STATUS_INVALID_INPUT = 2,
  PSDC_STATUS_NUMERICAL_FAILURE = 3,
  PSDC_STATUS_BUFFER_TOO_SMALL = 4,
  PSDC_STATUS_PANIC = 5,
} PsdcStatus;

/**
 * Eigenvalues (ascending) and column-major eigenvectors.
 */
typedef struct PsdcEigen PsdcEigen;

/**
 * Symmetric tridiagonal matrix.
 */
typedef struct PsdcTridiagonal PsdcTridiagonal;

/**
 * Solver settings passed by value.
 */
typedef struct {
  uintptr_t base_size;
  /**
   * 0 selects the size-dependent default.
   */
  uintptr_t k_threshold;
  uintptr_t grid_rows;
  uintptr_t grid_cols;
  uintptr_t block_size;
  PsdcVariant variant;
  /**
   * Compression tolerance; values <= 0 select the default.
   */
  double tol;
} PsdcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *psdc_last_error(void);

/**
 * Default options for a problem of order `n`.
 */
PsdcOptions psdc_options_default(uintptr_t n);

/**
 * Copies `diag[0..n]` and `offdiag[0..n-1]` into a new matrix.
 *
 * # Safety
 * `diag` must point to `n` doubles and `offdiag` to `n - 1` doubles
 * (may be null when `n == 1`); `out` must be writable.
 */
PsdcStatus psdc_tridiagonal_new(uintptr_t n,
                                const double *diag,
                                const double *offdiag,
                                PsdcTridiagonal **out);

/**
 * # Safety
 * `t` must come from `psdc_tridiagonal_new` and not be used afterwards.
 */
void psdc_tridiagonal_free(PsdcTridiagonal *t);

/**
 * Structured divide-and-conquer eigendecomposition.
 *
 * # Safety
 * `t` must be a live handle, `opts` readable or null for defaults, `out`
 * writable.
 */
PsdcStatus psdc_solve_tridiagonal(const PsdcTridiagonal *t,
                                  const PsdcOptions *opts,
                                  PsdcEigen **out);

/**
 * Dense reference eigendecomposition (orders up to 4096).
 *
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
PsdcStatus psdc_dense_oracle(const PsdcTridiagonal *t, PsdcEigen **out);

/**
 * Order of the decomposition, 0 for a null handle.
 *
 * # Safety
 * `e` must be a live handle or null.
 */
uintptr_t psdc_eigen_order(const PsdcEigen *e);

/**
 * Copies the `n` ascending eigenvalues into `buf`.
 *
 * # Safety
 * `e` must be a live handle and `buf` must hold `len` doubles.
 */
PsdcStatus psdc_eigen_values(const PsdcEigen *e, double *buf, uintptr_t len);

/**
 * Copies the eigenvectors, column-major (`n * n` doubles), into `buf`.
 *
 * # Safety
 * `e` must be a live handle and `buf` must hold `len` doubles.
 */
PsdcStatus psdc_eigen_vectors(const PsdcEigen *e, double *buf, uintptr_t len);

/**
 * Orthogonality `max|I - Q Q^T|` and scaled residual of `e` for `t`.
 *
 * # Safety
 * Handles must be live; `orthogonality` and `residual` writable.
 */
PsdcStatus psdc_eigen_accuracy(const PsdcTridiagonal *t,
                               const PsdcEigen *e,
                               double *orthogonality,
                               double *residual);

/**
 * # Safety
 * `e` must come from this library and not be used afterwards.
 */
void psdc_eigen_free(PsdcEigen *e);

/**
 * Runs an experiment described by a JSON spec and returns the JSON report
 * in `out`, to be released with `psdc_string_free`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` writable.
 */
PsdcStatus psdc_run_experiment_json(const char *spec_json, char **out);

/**
 * JSON of the default experiment spec, released with `psdc_string_free`.
 */
char *psdc_default_spec_json(void);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void psdc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSDC_H */
