#ifndef HAWKES_H
#define HAWKES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HawkesStatus {
  HAWKES_STATUS_OK = 0,
  HAWKES_STATUS_NULL_POINTER = 1,
  HAWKES_STATUS_INVALID_UTF8 = 2,
  HAWKES_STATUS_INVALID_ARGUMENT = 3,
  HAWKES_STATUS_CONFIG = 4,
  HAWKES_STATUS_SUPERCRITICAL = 5,
  HAWKES_STATUS_SIMULATION = 6,
  HAWKES_STATUS_NUMERICAL = 7,
  HAWKES_STATUS_UNSUPPORTED = 8,
  HAWKES_STATUS_IO = 9,
  HAWKES_STATUS_PANIC = 10,
} HawkesStatus;

/**
 * One simulated event stream.
 */
typedef struct HawkesEvents HawkesEvents;

/**
 * A validated experiment config.
 */
typedef struct HawkesModel HawkesModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *hawkes_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hawkes_version(void);

/**
 * Parse and validate a JSON experiment config. No environment overrides are applied.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HawkesStatus hawkes_model_from_json(const char *json, struct HawkesModel **out);

/**
 * # Safety
 * `model` must come from [`hawkes_model_from_json`] and not be used afterwards.
 */
void hawkes_model_free(struct HawkesModel *model);

/**
 * Hex SHA-256 of the canonical config text.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HawkesStatus hawkes_model_hash(const struct HawkesModel *model, char **out);

/**
 * Simulate one replica on `[0, run.horizon]` with the configured sampler,
 * reading the noise of `(seed, stream)`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HawkesStatus hawkes_simulate(const struct HawkesModel *model,
                                  uint64_t seed,
                                  uint64_t stream,
                                  struct HawkesEvents **out);

/**
 * Number of events, or 0 for a null handle.
 *
 * # Safety
 * `events` must be null or a live handle.
 */
size_t hawkes_events_len(const struct HawkesEvents *events);

/**
 * Copy up to `capacity` event times into `buf`; `written` receives the count.
 *
 * # Safety
 * `buf` must hold `capacity` doubles; `events` and `written` must be valid.
 */
enum HawkesStatus hawkes_events_times(const struct HawkesEvents *events,
                                      double *buf,
                                      size_t capacity,
                                      size_t *written);

/**
 * Copy up to `capacity` event types into `buf`; `written` receives the count.
 *
 * # Safety
 * As for [`hawkes_events_times`].
 */
enum HawkesStatus hawkes_events_types(const struct HawkesEvents *events,
                                      uint16_t *buf,
                                      size_t capacity,
                                      size_t *written);

/**
 * # Safety
 * `events` must come from [`hawkes_simulate`] and not be used afterwards.
 */
void hawkes_events_free(struct HawkesEvents *events);

/**
 * Hypothesis report as a JSON string.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HawkesStatus hawkes_check_json(const struct HawkesModel *model, char **out);

/**
 * Total-variation bound at time `t` between the process started from
 * `analysis.perturbation` (or the initial condition) and from rest.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HawkesStatus hawkes_tv_bound(const struct HawkesModel *model, double t, double *out);

/**
 * Spectral radius of a row-major non-negative `d × d` matrix. `converged`
 * (optional) is set to 0 when the value is only a Gershgorin bound.
 *
 * # Safety
 * `matrix` must hold `d * d` doubles; `radius` must be valid; `converged` may be null.
 */
enum HawkesStatus hawkes_spectral_radius(const double *matrix,
                                         size_t d,
                                         double *radius,
                                         int32_t *converged);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void hawkes_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAWKES_H */
