#ifndef OPMEAN_H
#define OPMEAN_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum OmStatus {
  OM_STATUS_OK = 0,
  OM_STATUS_NULL_POINTER = 1,
  OM_STATUS_INVALID_INPUT = 2,
  OM_STATUS_NO_CONVERGENCE = 3,
  OM_STATUS_BUFFER_TOO_SMALL = 4,
  OM_STATUS_PANIC = 5,
} OmStatus;

// Symmetric positive definite matrix.
typedef struct OmMatrix OmMatrix;

// Description of an n-variable mean.
typedef struct OmMeanSpec OmMeanSpec;

// Outcome of one inequality check.
typedef struct OmCheckResult {
  // 1 when the inequality holds within tolerance.
  int32_t holds;
  double margin;
} OmCheckResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` writable bytes.
uintptr_t om_last_error(char *buf, uintptr_t len);

// Builds a matrix from `dim * dim` row-major entries.
//
// # Safety
// `entries` must point to `dim * dim` readable doubles; `out` must be writable.
enum OmStatus om_matrix_new(uintptr_t dim, const double *entries, struct OmMatrix **out);

// # Safety
// `m` must be null or a handle from this library not yet freed.
void om_matrix_free(struct OmMatrix *m);

// Dimension of `m`, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
uintptr_t om_matrix_dim(const struct OmMatrix *m);

// Writes the row-major entries of `m` into `out`, which holds `len` doubles.
//
// # Safety
// `m` must be a live handle; `out` valid for `len` writable doubles.
enum OmStatus om_matrix_entries(const struct OmMatrix *m, double *out, uintptr_t len);

// Parses a mean description such as `{"kind": "karcher", "weights": [0.5, 0.5]}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum OmStatus om_mean_spec_from_json(const char *json, struct OmMeanSpec **out);

// # Safety
// `s` must be null or a handle from this library not yet freed.
void om_mean_spec_free(struct OmMeanSpec *s);

// Evaluates `spec` on `count` matrices. `tol` and `max_iters` override the
// solver defaults when positive. The result is a new handle in `out`.
//
// # Safety
// `spec` must be live, `mats` must hold `count` live handles, `out` writable.
enum OmStatus om_mean_evaluate(const struct OmMeanSpec *spec,
                               const struct OmMatrix *const *mats,
                               uintptr_t count,
                               double tol,
                               uintptr_t max_iters,
                               struct OmMatrix **out);

// Thompson distance `‖log A^{-1/2} B A^{-1/2}‖`.
//
// # Safety
// `a`, `b` must be live handles; `out` writable.
enum OmStatus om_thompson_distance(const struct OmMatrix *a, const struct OmMatrix *b, double *out);

// Generalized Kantorovich constant `K(h, p)`, `h > 1`.
//
// # Safety
// `out` must be writable.
enum OmStatus om_kantorovich(double h, double p, double *out);

// Runs one inequality check described as JSON, in the same format as the
// `instance` field of campaign report lines.
//
// # Safety
// `json` must be a NUL-terminated string; `out` writable.
enum OmStatus om_check_instance(const char *json, struct OmCheckResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPMEAN_H */
