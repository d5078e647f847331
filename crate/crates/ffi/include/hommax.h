#ifndef HOMMAX_H
#define HOMMAX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum HxStatus {
  HX_STATUS_OK = 0,
  HX_STATUS_NULL_POINTER = 1,
  // Bad configuration, geometry or argument.
  HX_STATUS_INVALID_ARGUMENT = 2,
  HX_STATUS_SOLVER = 3,
  HX_STATUS_NOT_CONVERGED = 4,
  // Frequency inside a resonance guard.
  HX_STATUS_POLE_GUARD = 5,
  HX_STATUS_BUFFER_TOO_SMALL = 6,
  HX_STATUS_PANIC = 7,
} HxStatus;

// Unit cell: geometry, resolution and permittivities.
typedef struct HxCell HxCell;

// Inclusion resonances and the `Gamma` evaluator built from them.
typedef struct HxSpectrum HxSpectrum;

// Effective tensor with its stiff-inclusion diagnostics.
typedef struct HxTensor HxTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *hx_last_error(void);

// Library version as a static NUL-terminated string.
const char *hx_version(void);

// Ball inclusion of `radius` at `center` on an `n^3` grid with constant
// permittivities.
//
// # Safety
// `center` must point to 3 readable doubles and `out` to a writable handle slot.
enum HxStatus hx_cell_ball(size_t n,
                           const double *center,
                           double radius,
                           double eps0,
                           double eps1,
                           struct HxCell **out);

// Build a cell from the text of a TOML run configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a writable handle slot.
enum HxStatus hx_cell_from_toml(const char *toml, struct HxCell **out);

// # Safety
// `cell` must be null or a handle from an `hx_cell_*` constructor, freed once.
void hx_cell_free(struct HxCell *cell);

// Solve the three corrector problems and the stiff duality check.
//
// # Safety
// `cell` must be a live cell handle and `out` a writable handle slot.
enum HxStatus hx_effective_tensor(const struct HxCell *cell, double tol, struct HxTensor **out);

// Copy the symmetric 3x3 tensor, row-major, into `out`.
//
// # Safety
// `tensor` must be a live handle and `out` must point to 9 writable doubles.
enum HxStatus hx_tensor_get(const struct HxTensor *tensor, double *out);

// `|A stiff - I|_F`, or NaN when the stiff problem was not solved.
//
// # Safety
// `tensor` must be null or a live handle.
double hx_tensor_product_residual(const struct HxTensor *tensor);

// # Safety
// `tensor` must be null or a handle from [`hx_effective_tensor`], freed once.
void hx_tensor_free(struct HxTensor *tensor);

// Lowest `k` inclusion resonances (a degenerate cluster straddling `k`
// is completed).
//
// # Safety
// `cell` must be a live cell handle and `out` a writable handle slot.
enum HxStatus hx_spectrum_solve(const struct HxCell *cell,
                                size_t k,
                                uint64_t seed,
                                struct HxSpectrum **out);

// Number of computed resonances, or 0 for a null handle.
//
// # Safety
// `spec` must be null or a live handle.
size_t hx_spectrum_len(const struct HxSpectrum *spec);

// Copy the ascending `alpha_k` into `out`, which holds `cap` doubles.
//
// # Safety
// `spec` must be a live handle and `out` must point to `cap` writable doubles.
enum HxStatus hx_spectrum_alphas(const struct HxSpectrum *spec, double *out, size_t cap);

// Copy the moments `int r^k`, three per resonance, into `out` (`cap` doubles).
//
// # Safety
// `spec` must be a live handle and `out` must point to `cap` writable doubles.
enum HxStatus hx_spectrum_moments(const struct HxSpectrum *spec, double *out, size_t cap);

// Truncated series `Gamma(omega)`, row-major, into 9 doubles at `out`.
//
// # Safety
// `spec` must be a live handle and `out` must point to 9 writable doubles.
enum HxStatus hx_spectrum_gamma(const struct HxSpectrum *spec, double omega, double *out);

// # Safety
// `spec` must be null or a handle from [`hx_spectrum_solve`], freed once.
void hx_spectrum_free(struct HxSpectrum *spec);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMMAX_H */
