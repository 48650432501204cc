#ifndef ENTRANCE_FFI_H
#define ENTRANCE_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EntranceStatus {
  ENTRANCE_STATUS_OK = 0,
  ENTRANCE_STATUS_NULL_POINTER = 1,
  ENTRANCE_STATUS_INVALID_ARGUMENT = 2,
  ENTRANCE_STATUS_CONFIG = 3,
  ENTRANCE_STATUS_PRECONDITION = 4,
  ENTRANCE_STATUS_BLOW_UP = 5,
  ENTRANCE_STATUS_DEGENERATE = 6,
  ENTRANCE_STATUS_NUMERIC = 7,
  ENTRANCE_STATUS_CONVERGENCE = 8,
  ENTRANCE_STATUS_DIVERGENT = 9,
  ENTRANCE_STATUS_UNSUPPORTED = 10,
  ENTRANCE_STATUS_PARSE = 11,
  ENTRANCE_STATUS_IO = 12,
  ENTRANCE_STATUS_PANIC = 13,
} EntranceStatus;

// Simulation scheme selector.
typedef enum EntranceScheme {
  ENTRANCE_SCHEME_TRUNCATED_EM = 0,
  ENTRANCE_SCHEME_TAMED_EM = 1,
} EntranceScheme;

// Fokker–Planck boundary condition.
typedef enum EntranceBoundary {
  ENTRANCE_BOUNDARY_REFLECTING = 0,
  ENTRANCE_BOUNDARY_ABSORBING = 1,
} EntranceBoundary;

// Fokker–Planck transition density on a uniform grid.
typedef struct EntranceDensity EntranceDensity;

// Samples of X_t from a Monte Carlo push.
typedef struct EntranceEnsemble EntranceEnsemble;

// Coefficient set of an SDE.
typedef struct EntranceModel EntranceModel;

typedef struct EntranceUniformCertificate {
  double beta;
  double zeta;
  double zeta0;
  double lambda;
  double c;
} EntranceUniformCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next call on the thread.
const char *entrance_last_error_message(void);

// Build a catalog example; `keys`/`values` override `n_params` of its parameters (may be null when 0).
//
// # Safety
// `name` and each key must be NUL-terminated strings; `keys`/`values` must hold `n_params` entries.
enum EntranceStatus entrance_model_from_example(const char *name,
                                                const char *const *keys,
                                                const double *values,
                                                size_t n_params,
                                                struct EntranceModel **out);

// # Safety
// `m` must be null or a handle from `entrance_model_from_example` not yet freed.
void entrance_model_free(struct EntranceModel *m);

// State dimension, 0 for a null handle.
//
// # Safety
// `m` must be null or a live model handle.
size_t entrance_model_dim(const struct EntranceModel *m);

// Push `paths` copies of x0 (length `dim`) from s to t.
//
// # Safety
// `model` must be a live handle, `x0` must hold `dim` values, `out` must be writable.
enum EntranceStatus entrance_simulate(const struct EntranceModel *model,
                                      double s,
                                      const double *x0,
                                      size_t dim,
                                      double t,
                                      double step,
                                      size_t paths,
                                      uint64_t seed,
                                      enum EntranceScheme scheme,
                                      struct EntranceEnsemble **out);

// # Safety
// `e` must be null or a live ensemble handle.
void entrance_ensemble_free(struct EntranceEnsemble *e);

// Number of samples.
//
// # Safety
// `e` must be null or a live ensemble handle.
size_t entrance_ensemble_len(const struct EntranceEnsemble *e);

// # Safety
// `e` must be null or a live ensemble handle.
size_t entrance_ensemble_dim(const struct EntranceEnsemble *e);

// Row-major samples (len × dim values), owned by the handle.
//
// # Safety
// `e` must be null or a live ensemble handle.
const double *entrance_ensemble_samples(const struct EntranceEnsemble *e);

// Sample mean of |X|² and its standard error.
//
// # Safety
// `e` must be a live ensemble handle; `mean` and `se` must be writable.
enum EntranceStatus entrance_ensemble_second_moment(const struct EntranceEnsemble *e,
                                                    double *mean,
                                                    double *se);

// One-step contraction factor ζ for (γ, K, η) at level R and weight β.
//
// # Safety
// `out` must be writable.
enum EntranceStatus entrance_zeta(double gamma,
                                  double k,
                                  double eta,
                                  double big_r,
                                  double beta,
                                  double *out);

// Uniform-in-time certificate from Δ-step constants (γ, h, η) and level R.
//
// # Safety
// `out` must be writable.
enum EntranceStatus entrance_uniform_certificate(double delta_t,
                                                 double gamma,
                                                 double h,
                                                 double eta,
                                                 double big_r,
                                                 struct EntranceUniformCertificate *out);

// ρ_β between N(m1, v1) and N(m2, v2) with V = x².
//
// # Safety
// `out` must be writable.
enum EntranceStatus entrance_gaussian_rho_beta(double m1,
                                               double v1,
                                               double m2,
                                               double v2,
                                               double beta,
                                               double *out);

// ρ_β with V = x² between two measures on the same `n`-cell grid of [lo, hi], masses plus out-of-box leak.
//
// # Safety
// `a` and `b` must hold `n` values; `out` must be writable.
enum EntranceStatus entrance_rho_beta_grid(double lo,
                                           double hi,
                                           size_t n,
                                           const double *a,
                                           double leak_a,
                                           const double *b,
                                           double leak_b,
                                           double beta,
                                           double *out);

// Fokker–Planck density of X_t started at x0 at time s, on `cells` cells of [lo, hi] with time step dt.
//
// # Safety
// `model` must be a live one-dimensional model handle; `out` must be writable.
enum EntranceStatus entrance_fp_solve(const struct EntranceModel *model,
                                      double s,
                                      double x0,
                                      double t,
                                      double lo,
                                      double hi,
                                      size_t cells,
                                      double dt,
                                      enum EntranceBoundary boundary,
                                      struct EntranceDensity **out);

// # Safety
// `d` must be null or a live density handle.
void entrance_density_free(struct EntranceDensity *d);

// # Safety
// `d` must be null or a live density handle.
size_t entrance_density_cells(const struct EntranceDensity *d);

// Cell centres, owned by the handle.
//
// # Safety
// `d` must be null or a live density handle.
const double *entrance_density_centers(const struct EntranceDensity *d);

// Density values per cell, owned by the handle.
//
// # Safety
// `d` must be null or a live density handle.
const double *entrance_density_values(const struct EntranceDensity *d);

// Linear interpolation of the density at y (0 outside the grid, NaN for a null handle).
//
// # Safety
// `d` must be null or a live density handle.
double entrance_density_at(const struct EntranceDensity *d, double y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENTRANCE_FFI_H */
