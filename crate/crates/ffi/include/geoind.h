#ifndef GEOIND_H
#define GEOIND_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GeoindSkip {
  GEOIND_SKIP_NONE = 0,
  GEOIND_SKIP_FORCED_EASY = 1,
  GEOIND_SKIP_FORCED_HARD = 2,
} GeoindSkip;

typedef enum GeoindStatus {
  GEOIND_STATUS_OK = 0,
  GEOIND_STATUS_NULL_POINTER = 1,
  GEOIND_STATUS_INVALID_ARGUMENT = 2,
  GEOIND_STATUS_BUDGET_EXHAUSTED = 3,
  GEOIND_STATUS_PANIC = 4,
} GeoindStatus;

/**
 * Opaque mechanism handle.
 */
typedef struct GeoindMechanism GeoindMechanism;

/**
 * One sanitized answer.
 */
typedef struct GeoindReport {
  double x;
  double y;
  /**
   * 1 when fresh noise was reported, 0 when the prediction was.
   */
  uint8_t hard;
  enum GeoindSkip skipped;
  double spent_test;
  double spent_noise;
} GeoindReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a fixed-rate mechanism with the library's default η, γ, δ and
 * PR estimate. `v_max_mps > 0` enables the elapsed-time skip.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum GeoindStatus geoind_mechanism_new_fixed_rate(uint64_t seed,
                                                  double eps_total,
                                                  double rho,
                                                  double v_max_mps,
                                                  struct GeoindMechanism **out);

/**
 * Creates a fixed-utility mechanism targeting `alpha_m` meters.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum GeoindStatus geoind_mechanism_new_fixed_utility(uint64_t seed,
                                                     double eps_total,
                                                     double alpha_m,
                                                     double v_max_mps,
                                                     struct GeoindMechanism **out);

/**
 * Sanitizes the planar point `(x, y)` queried at time `t` (seconds).
 *
 * # Safety
 * `handle` must come from a constructor and not be freed; `out` must be
 * valid for a write.
 */
enum GeoindStatus geoind_mechanism_report(struct GeoindMechanism *handle,
                                          double x,
                                          double y,
                                          double t,
                                          struct GeoindReport *out);

/**
 * Budget spent so far, or NaN for a null handle.
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
double geoind_mechanism_spent(const struct GeoindMechanism *handle);

/**
 * Number of answered queries, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
size_t geoind_mechanism_steps(const struct GeoindMechanism *handle);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `handle` must be null or a live handle, and is invalid afterwards.
 */
void geoind_mechanism_free(struct GeoindMechanism *handle);

/**
 * Radius within which planar Laplace noise at `eps` stays with probability
 * `delta`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum GeoindStatus geoind_icpl(double eps, double delta, double *out);

/**
 * Bound on linear Laplace noise at `eps` that holds with probability `delta`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum GeoindStatus geoind_icll(double eps, double delta, double *out);

/**
 * The last error on this thread, or null. Valid until the next call on the
 * same thread.
 */
const char *geoind_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOIND_H */
