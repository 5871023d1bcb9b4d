#ifndef STEADYSTEIN_H
#define STEADYSTEIN_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_INVALID_PARAM = 1,
  SS_STATUS_STABILITY = 2,
  SS_STATUS_TRUNCATION = 3,
  SS_STATUS_NUMERIC = 4,
  SS_STATUS_INVALID_PHASE_TYPE = 5,
  SS_STATUS_PRECONDITION = 6,
  SS_STATUS_NULL_POINTER = 7,
  SS_STATUS_PANIC = 8,
} SsStatus;

typedef enum SsMode {
  SS_MODE_CONSTANT = 0,
  SS_MODE_STATE_DEPENDENT = 1,
} SsMode;

typedef enum SsMetric {
  SS_METRIC_WASSERSTEIN = 0,
  SS_METRIC_KOLMOGOROV = 1,
  SS_METRIC_PMF_SUP = 2,
} SsMetric;

// Stationary density of a diffusion approximation.
typedef struct SsDensity SsDensity;

// Exact stationary law of the customer count.
typedef struct SsLattice SsLattice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t ss_last_error(char *buf, uintptr_t len);

// Build the exact law for arrival rate `lambda`, service rate `mu`, `n`
// servers and abandonment rate `alpha` (0 for Erlang-C).
//
// # Safety
// `out_handle` must be a valid pointer.
enum SsStatus ss_lattice_new(double lambda,
                             double mu,
                             uint64_t n,
                             double alpha,
                             double tail_eps,
                             struct SsLattice **out_handle);

// # Safety
// `h` must come from `ss_lattice_new` and not be used afterwards.
void ss_lattice_free(struct SsLattice *h);

// Number of retained states, `k_max + 1`.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_lattice_len(const struct SsLattice *h, uintptr_t *len);

// # Safety
// Pointers must be valid.
enum SsStatus ss_lattice_pmf(const struct SsLattice *h, uintptr_t k, double *value);

// `E[X]` of the unscaled count.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_lattice_mean_count(const struct SsLattice *h, double *value);

// `m`-th moment of the scaled count, centered at the fluid equilibrium.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_lattice_scaled_moment(const struct SsLattice *h, uint32_t m, double *value);

// # Safety
// `out_handle` must be a valid pointer.
enum SsStatus ss_density_new(double lambda,
                             double mu,
                             uint64_t n,
                             double alpha,
                             enum SsMode mode,
                             struct SsDensity **out_handle);

// # Safety
// `h` must come from `ss_density_new` and not be used afterwards.
void ss_density_free(struct SsDensity *h);

// # Safety
// Pointers must be valid.
enum SsStatus ss_density_pdf(const struct SsDensity *h, double x, double *value);

// # Safety
// Pointers must be valid.
enum SsStatus ss_density_cdf(const struct SsDensity *h, double x, double *value);

// # Safety
// Pointers must be valid.
enum SsStatus ss_density_moment(const struct SsDensity *h, uint32_t m, double *value);

// Distance between an exact law and a diffusion density built for the same queue.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_distance(const struct SsLattice *lattice,
                          const struct SsDensity *density,
                          enum SsMetric metric,
                          double *value);

// Exact `E|T~|` for `n` servers, `lambda = n`, and unit-mean two-phase
// Coxian service with squared coefficient of variation 24.
//
// # Safety
// `value` must be a valid pointer.
enum SsStatus ss_c2_mean_abs_total(uint64_t n, double alpha, double tail_eps, double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEADYSTEIN_H */
