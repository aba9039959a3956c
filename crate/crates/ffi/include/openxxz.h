/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef OPENXXZ_H
#define OPENXXZ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Return codes. Values 2..8 match the error codes of the CLI error record.
typedef enum OxxzStatus {
  OXXZ_STATUS_OK = 0,
  OXXZ_STATUS_NULL_POINTER = 1,
  OXXZ_STATUS_INVALID_PARAM = 2,
  OXXZ_STATUS_DEGENERATE_REGION = 3,
  OXXZ_STATUS_SINGULAR = 4,
  OXXZ_STATUS_NO_CONVERGENCE = 5,
  OXXZ_STATUS_CONSISTENCY = 6,
  OXXZ_STATUS_CONFIG = 7,
  OXXZ_STATUS_IO = 8,
  OXXZ_STATUS_BUFFER_TOO_SMALL = 9,
  OXXZ_STATUS_PANIC = 10,
} OxxzStatus;

// Method selector for `oxxz_qgen`.
typedef enum OxxzMethod {
  OXXZ_METHOD_ED_BRUTE = 0,
  OXXZ_METHOD_FINITE_SUM = 1,
  OXXZ_METHOD_MULTIPLE_INTEGRAL = 2,
  OXXZ_METHOD_THERMO_LIMIT = 3,
} OxxzMethod;

// Opaque Bethe solution (roots and holes).
typedef struct OxxzBethe OxxzBethe;

// Opaque model parameters.
typedef struct OxxzParams OxxzParams;

typedef struct OxxzComplex {
  double re;
  double im;
} OxxzComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *oxxz_version(void);

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *oxxz_last_error(void);

// Homogeneous chain of even length `l`, η = iγ.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum OxxzStatus oxxz_params_new(uintptr_t l,
                                double gamma,
                                struct OxxzComplex xi_plus,
                                struct OxxzComplex xi_minus,
                                struct OxxzParams **out);

// Sets `n` inhomogeneities (n must equal L).
//
// # Safety
// `p` must come from `oxxz_params_new`; `s` must point to `n` values.
enum OxxzStatus oxxz_params_set_inhom(struct OxxzParams *p,
                                      const struct OxxzComplex *s,
                                      uintptr_t n);

// # Safety
// `p` must come from `oxxz_params_new` or be NULL; it is invalid afterwards.
void oxxz_params_free(struct OxxzParams *p);

// Bethe roots and hole-type solutions of the lowest zero-magnetization state.
//
// # Safety
// `p` must be a live params handle, `out` a valid handle slot.
enum OxxzStatus oxxz_bethe_solve(const struct OxxzParams *p, struct OxxzBethe **out);

// Copies the L/2 roots; `len_out` receives the count.
//
// # Safety
// `b` must be a live solution handle; `buf` must hold `cap` values.
enum OxxzStatus oxxz_bethe_roots(const struct OxxzBethe *b,
                                 struct OxxzComplex *buf,
                                 uintptr_t cap,
                                 uintptr_t *len_out);

// Copies the L+1 holes; `len_out` receives the count.
//
// # Safety
// As for `oxxz_bethe_roots`.
enum OxxzStatus oxxz_bethe_holes(const struct OxxzBethe *b,
                                 struct OxxzComplex *buf,
                                 uintptr_t cap,
                                 uintptr_t *len_out);

// Largest Bethe-equation residual of the solution.
//
// # Safety
// `b` must be a live solution handle, `out` valid.
enum OxxzStatus oxxz_bethe_residual(const struct OxxzBethe *b, double *out);

// Energy of the Bethe state.
//
// # Safety
// Live handles and a valid `out`.
enum OxxzStatus oxxz_bethe_energy(const struct OxxzBethe *b,
                                  const struct OxxzParams *p,
                                  double *out);

// # Safety
// `b` must come from `oxxz_bethe_solve` or be NULL; it is invalid afterwards.
void oxxz_bethe_free(struct OxxzBethe *b);

// Lowest S^z = 0 energy by exact diagonalization.
//
// # Safety
// Live params handle and a valid `out`.
enum OxxzStatus oxxz_ed_ground_energy(const struct OxxzParams *p, double *out);

// ⟨Q_m(φ)⟩ with default solver options.
//
// # Safety
// Live params handle and a valid `out`.
enum OxxzStatus oxxz_qgen(const struct OxxzParams *p,
                          enum OxxzMethod method,
                          uintptr_t m,
                          double phi,
                          struct OxxzComplex *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPENXXZ_H */
