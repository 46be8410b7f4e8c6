#ifndef BEADSPLIT_H
#define BEADSPLIT_H

/* Generated by cbindgen from beadsplit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
enum BspStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  BSP_STATUS_OK = 0,
  BSP_STATUS_NULL_ARGUMENT = 1,
  BSP_STATUS_INVALID_ARGUMENT = 2,
  BSP_STATUS_NUMERIC_ERROR = 3,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum BspStatus BspStatus;
#else
typedef int32_t BspStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Switching probability families addressable over the ABI.
 */
enum BspSwitching
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  BSP_SWITCHING_NONE = 0,
  BSP_SWITCHING_SIZE_BIASED = 1,
  BSP_SWITCHING_BIGGER_BLOCK = 2,
  BSP_SWITCHING_CONSTANT = 3,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum BspSwitching BspSwitching;
#else
typedef int32_t BspSwitching;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque splitting-density handle.
 */
typedef struct BspDensity BspDensity;

/**
 * Analytic junction-mass moments under size-biased switching.
 */
typedef struct BspJunctionMoments {
  /**
   * E[M_(tau-)^rho]
   */
  double m_tau_minus;
  /**
   * E[M_tau^rho]
   */
  double m_tau;
  /**
   * E[(M_tau*)^rho]
   */
  double m_tau_star;
  /**
   * E[(M_tau / M_(tau-))^rho]
   */
  double ratio;
} BspJunctionMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create the Brownian splitting density
 * (2 pi)^(-1/2) u^(-3/2) (1-u)^(-3/2).
 *
 * # Safety
 * `out` must be a valid pointer; the result must be released with
 * `bsp_density_free`.
 */
BspStatus bsp_density_brownian(struct BspDensity **out);

/**
 * Create a beta-family density scale * u^(-a-1) (1-u)^(-b-1);
 * requires a, b < 1 for integrability.
 *
 * # Safety
 * `out` must be a valid pointer; the result must be released with
 * `bsp_density_free`.
 */
BspStatus bsp_density_beta(double a, double b, double scale, struct BspDensity **out);

/**
 * Release a density handle. Null is allowed.
 *
 * # Safety
 * `d` must be null or a pointer previously returned by a
 * `bsp_density_*` constructor, not yet freed.
 */
void bsp_density_free(struct BspDensity *d);

/**
 * Phi(1) = int u (1-u) f(u) du.
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_phi_one(const struct BspDensity *d, double *out);

/**
 * Laplace exponent Phi(rho) = int (1 - u^rho) u f(u) du.
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_laplace_exponent(const struct BspDensity *d, double rho, double *out);

/**
 * Truncated exponent Phi_eps(rho) over factors below 1 - epsilon.
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_laplace_exponent_truncated(const struct BspDensity *d,
                                         double rho,
                                         double epsilon,
                                         double *out);

/**
 * Phi(rho+1, rho+1) = int (1-u)^(rho+1) u f(u) du.
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_phi_second(const struct BspDensity *d, double rho, double *out);

/**
 * Symmetrised exponent Phi*(rho) = Phi(rho+1) - Phi(rho+1, rho+1).
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_symmetrized_exponent(const struct BspDensity *d, double rho, double *out);

/**
 * The symmetrisation f*(u) = u f(u) + (1-u) f(1-u) as a new handle.
 *
 * # Safety
 * `d` must be a live density handle; `out` receives a new handle to
 * be released with `bsp_density_free`.
 */
BspStatus bsp_symmetrize(const struct BspDensity *d, struct BspDensity **out);

/**
 * Switch rate phi = int p(u) u f(u) du for a built-in switching
 * family (`param` is the constant for `BSP_SWITCHING_CONSTANT`).
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_switch_rate(const struct BspDensity *d, BspSwitching kind, double param, double *out);

/**
 * kappa block weight int u^(n1-1) (1-u)^n2 u f(u) du.
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_kappa_block_weight(const struct BspDensity *d, uint32_t n1, uint32_t n2, double *out);

/**
 * The analytic junction-mass catalog at exponent rho under
 * size-biased switching.
 *
 * # Safety
 * `d` must be a live density handle and `out` a valid pointer.
 */
BspStatus bsp_junction_mellin(const struct BspDensity *d,
                              double rho,
                              struct BspJunctionMoments *out);

/**
 * Monte Carlo mean and standard error of M_t^rho over `replicates`
 * truncated fragmenter paths; deterministic in (seed, epsilon,
 * replicates). Compare against exp(-t Phi_eps(rho)).
 *
 * # Safety
 * `d` must be a live density handle; `out_mean` and `out_se` must be
 * valid pointers.
 */
BspStatus bsp_mellin_mc(const struct BspDensity *d,
                        double rho,
                        double t,
                        uint64_t replicates,
                        double epsilon,
                        uint64_t seed,
                        double *out_mean,
                        double *out_se);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEADSPLIT_H */
