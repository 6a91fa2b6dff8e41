#ifndef MEMBRANE_H
#define MEMBRANE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define MEMBRANE_OK 0

#define MEMBRANE_ERR_NULL_POINTER 1

#define MEMBRANE_ERR_INVALID_ARGUMENT 2

#define MEMBRANE_ERR_OUTSIDE_BOX 3

#define MEMBRANE_ERR_NOT_CONVERGED 4

#define MEMBRANE_ERR_PRECONDITION 5

#define MEMBRANE_ERR_IO 6

#define MEMBRANE_ERR_QUADRATURE 7

#define MEMBRANE_ERR_FORMAT 8

#define MEMBRANE_ERR_OUTSIDE_DOMAIN 9

#define MEMBRANE_ERR_BUFFER_TOO_SMALL 10

#define MEMBRANE_ERR_PANIC 11

/*
 Per-sample summaries of a batch of membrane samples.
 */
typedef struct MembraneBatch MembraneBatch;

/*
 A lattice field on `[0, n]^4`.
 */
typedef struct MembraneField MembraneField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *membrane_version(void);

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next call into the library on the same thread.
 */
const char *membrane_last_error_message(void);

/*
 `λ² = 8π²`.
 */
double membrane_lambda_squared(void);

/*
 Zero field on `[0, n]^4`.

 # Safety
 `out` must be valid for writes.
 */
int32_t membrane_field_zeros(uint32_t n, struct MembraneField **out);

/*
 Releases a field; NULL is ignored.

 # Safety
 `field` must come from this library and not be used afterwards.
 */
void membrane_field_free(struct MembraneField *field);

/*
 Grid size `n`, or 0 for NULL.

 # Safety
 `field` must be NULL or a live handle.
 */
uint32_t membrane_field_n(const struct MembraneField *field);

/*
 Number of stored values `(n+1)^4`, or 0 for NULL.

 # Safety
 `field` must be NULL or a live handle.
 */
uintptr_t membrane_field_len(const struct MembraneField *field);

/*
 Value at lattice coordinates `coords[4]`; 0 outside the box.

 # Safety
 `field` must be a live handle, `coords` readable for 4 values and `out`
 writable.
 */
int32_t membrane_field_get(const struct MembraneField *field, const int64_t *coords, double *out);

/*
 Copies the values in lexicographic site order into `buf[0..len)`.

 # Safety
 `field` must be a live handle and `buf` writable for `len` values.
 */
int32_t membrane_field_copy_values(const struct MembraneField *field, double *buf, uintptr_t len);

/*
 Reads a field file.

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
int32_t membrane_field_load(const char *path, struct MembraneField **out);

/*
 Writes a field file.

 # Safety
 `field` must be a live handle and `path` a NUL-terminated string.
 */
int32_t membrane_field_save(const struct MembraneField *field, const char *path);

/*
 Green column `G_h(·, source)` on `[0, n]^4`. `iterations` and
 `residual` may be NULL.

 # Safety
 `source` readable for 4 values; `out` writable; optional outputs NULL or
 writable.
 */
int32_t membrane_green_column(uint32_t n,
                              const int64_t *source,
                              double tol,
                              struct MembraneField **out,
                              uintptr_t *iterations,
                              double *residual);

/*
 Normalized full-space Green's function `F(x)` at `x[4] ∈ Z^4`.

 # Safety
 `x` readable for 4 values; `out` writable.
 */
int32_t membrane_fullspace_eval(const int64_t *x, double *out);

/*
 One membrane sample, stream `index` of `seed`.

 # Safety
 `out` writable.
 */
int32_t membrane_sample_field(uint32_t n,
                              uint64_t seed,
                              uint64_t index,
                              double tol,
                              struct MembraneField **out);

/*
 `count` samples summarized by maximum, argmax and `Z_N`.

 # Safety
 `out` writable.
 */
int32_t membrane_batch_new(uint32_t n,
                           uint64_t seed,
                           uintptr_t count,
                           double tol,
                           struct MembraneBatch **out);

/*
 Releases a batch; NULL is ignored.

 # Safety
 `batch` must come from this library and not be used afterwards.
 */
void membrane_batch_free(struct MembraneBatch *batch);

/*
 Number of samples, or 0 for NULL.

 # Safety
 `batch` must be NULL or a live handle.
 */
uintptr_t membrane_batch_len(const struct MembraneBatch *batch);

/*
 Summary of sample `i`. Any output pointer may be NULL; `argmax` receives
 4 coordinates.

 # Safety
 `batch` must be a live handle; outputs NULL or writable.
 */
int32_t membrane_batch_sample(const struct MembraneBatch *batch,
                              uintptr_t i,
                              double *max,
                              int64_t *argmax,
                              double *z);

/*
 Centering `m_N` of the maximum, `n >= 3`.

 # Safety
 `out` writable.
 */
int32_t membrane_centering(uint32_t n, double *out);

/*
 `Z_N` of a field.

 # Safety
 `field` must be a live handle; `out` writable.
 */
int32_t membrane_z_statistic(const struct MembraneField *field, double *out);

/*
 Fitted `W^{2,2}_h` convergence rate of the finite-difference scheme for
 the manufactured solution `"zero"`, `"sin2"` or `"power:<a>"` on
 `count >= 3` meshes. Writes NaN when the rate is undefined.

 # Safety
 `solution` NUL-terminated; `meshes` readable for `count` values; `out`
 writable.
 */
int32_t membrane_scheme_rate(const char *solution,
                             const uint32_t *meshes,
                             uintptr_t count,
                             double tol,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMBRANE_H */
