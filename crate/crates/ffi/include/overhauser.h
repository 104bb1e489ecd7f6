#ifndef OVERHAUSER_H
#define OVERHAUSER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OvhStatus {
  OVH_STATUS_OK = 0,
  OVH_STATUS_NULL_POINTER = 1,
  OVH_STATUS_INVALID_UTF8 = 2,
  OVH_STATUS_PARSE_ERROR = 3,
  OVH_STATUS_VALIDATION_ERROR = 4,
  OVH_STATUS_NON_CONVERGED = 5,
  OVH_STATUS_NO_CONVERGENCE = 6,
  OVH_STATUS_BRACKET_ESCAPE = 7,
  OVH_STATUS_GRID_TOO_SMALL = 8,
  OVH_STATUS_CFL_VIOLATION = 9,
  OVH_STATUS_NUMERIC_OVERFLOW = 10,
  OVH_STATUS_BUFFER_TOO_SMALL = 11,
  OVH_STATUS_INDEX_OUT_OF_RANGE = 12,
  OVH_STATUS_PANIC = 13,
} OvhStatus;

// Model, feedback and sweep settings.
typedef struct OvhModel OvhModel;

// A finished sweep trace.
typedef struct OvhSweep OvhSweep;

typedef struct OvhSteadyState {
  // Shift [rad/ns].
  double omega_f;
  bool stable;
  // `|drift|` at the root [rad/ns^2].
  double residual;
  double basin_seed;
  double scaled_time;
  // Width of the final sign-change bracket [rad/ns].
  double bracket;
} OvhSteadyState;

typedef struct OvhSample {
  // Delay [ns].
  double tau;
  double omega_f;
  double count;
  // Pumping rate at the shift [1/ns].
  double beta_f;
  bool stable;
  bool jumped;
  // Set on the descending pass.
  bool backward;
  double residual;
} OvhSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model with every setting at its default.
//
// # Safety
// `out` must be valid for a pointer write.
enum OvhStatus ovh_model_new_default(struct OvhModel **out);

// Creates a model from TOML configuration text, as read by the CLI.
//
// # Safety
// `text` must be a NUL-terminated string and `out` valid for a pointer write.
enum OvhStatus ovh_model_from_config(const char *text, struct OvhModel **out);

// # Safety
// `model` must come from an `ovh_model_*` constructor and not be freed
// already. Null is ignored.
void ovh_model_free(struct OvhModel *model);

// Steady-state count rate at shift `omega` [rad/ns] and delay `tau` [ns].
//
// # Safety
// `model` must be a live handle and `out` valid for a write.
enum OvhStatus ovh_count_rate(const struct OvhModel *model, double omega, double tau, double *out);

// Mean-field drift of the shift [rad/ns^2].
//
// # Safety
// `model` must be a live handle and `out` valid for a write.
enum OvhStatus ovh_drift(const struct OvhModel *model, double omega, double tau, double *out);

// Relaxes from `omega_init` to the stable root of its basin.
//
// # Safety
// `model` must be a live handle and `out` valid for a write.
enum OvhStatus ovh_relax_to_steady(const struct OvhModel *model,
                                   double omega_init,
                                   double tau,
                                   struct OvhSteadyState *out);

// Every root of the drift at `tau`, ascending in shift.
//
// Writes up to `capacity` roots into `buf` and the total count into
// `n_roots`. Returns `BufferTooSmall` when the count exceeds `capacity`;
// `buf` may be null when `capacity` is 0.
//
// # Safety
// `buf` must be valid for `capacity` writes and `n_roots` for one.
enum OvhStatus ovh_steady_states(const struct OvhModel *model,
                                 double tau,
                                 struct OvhSteadyState *buf,
                                 size_t capacity,
                                 size_t *n_roots);

// Runs the configured delay sweep.
//
// # Safety
// `model` must be a live handle and `out` valid for a pointer write.
enum OvhStatus ovh_sweep_run(const struct OvhModel *model, struct OvhSweep **out);

// Number of samples in a sweep, 0 for null.
//
// # Safety
// `sweep` must be a live handle or null.
size_t ovh_sweep_len(const struct OvhSweep *sweep);

// # Safety
// `sweep` must be a live handle and `out` valid for a write.
enum OvhStatus ovh_sweep_get(const struct OvhSweep *sweep, size_t index, struct OvhSample *out);

// # Safety
// `sweep` must come from [`ovh_sweep_run`] and not be freed already. Null
// is ignored.
void ovh_sweep_free(struct OvhSweep *sweep);

// Golden-rule rate [1/ns] at which the trion hole flips a nucleus.
//
// # Safety
// `model` must be a live handle and `out` valid for a write.
enum OvhStatus ovh_trion_flip_rate(const struct OvhModel *model, double *out);

// Message for the last failure on this thread, or null after a success.
// Valid until the next `ovh_*` call on the same thread.
const char *ovh_last_error_message(void);

// Static name of a status, e.g. `"NO_CONVERGENCE"`.
const char *ovh_status_name(enum OvhStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OVERHAUSER_H */
