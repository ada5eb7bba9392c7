/* C interface to the maglev planar-stage simulation toolkit. */

#ifndef MAGLEV_H
#define MAGLEV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call across the C boundary.
//
// Everything except `Ok` leaves a message for `maglev_last_error`.
typedef enum MaglevStatus {
  // The call succeeded.
  MAGLEV_STATUS_OK = 0,
  // A required pointer argument was null.
  MAGLEV_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  MAGLEV_STATUS_INVALID_UTF8 = 2,
  // The configuration file or a selector name was rejected.
  MAGLEV_STATUS_CONFIG_ERROR = 3,
  // The simulation or certificate search failed.
  MAGLEV_STATUS_RUN_ERROR = 4,
  // Reading or writing a file failed.
  MAGLEV_STATUS_IO_ERROR = 5,
} MaglevStatus;

// Opaque owner of one experiment configuration.
typedef struct MaglevExperiment MaglevExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the toolkit version as a static NUL-terminated string.
const char *maglev_version(void);

// Returns the message of the most recent failure on the calling thread, or
// null if no call has failed yet.
//
// The pointer stays valid until the next failing call on the same thread.
const char *maglev_last_error(void);

// Creates an experiment with the default configuration and stores the new
// handle in `out`.
//
// # Safety
//
// `out` must be a valid pointer to writable storage for one handle pointer.
enum MaglevStatus maglev_experiment_new(struct MaglevExperiment **out);

// Loads a TOML configuration file and stores the new handle in `out`.
//
// # Safety
//
// `path` must be a NUL-terminated string and `out` a valid pointer to
// writable storage for one handle pointer.
enum MaglevStatus maglev_experiment_from_file(const char *path, struct MaglevExperiment **out);

// Releases a handle. Passing null is a no-op; passing a freed handle is
// undefined behavior.
//
// # Safety
//
// `handle` must be null or a pointer previously returned by one of the
// constructors and not yet freed.
void maglev_experiment_free(struct MaglevExperiment *handle);

// Simulates one scenario under one feedforward method and writes the
// tracking-error norms per coordinate: `l2` receives the six
// root-sum-square values, `linf` the six peak magnitudes.
//
// Scenario names: `ol-match`, `ol-mismatch`, `cl-match`, `cl-mismatch`,
// `cl-match-dist`, `cl-mismatch-dist`. Method names: `mass`,
// `annihilate-global`, `annihilate-local`, `nonlinear`, `lpv-local`,
// `lpv-global-inv`, `lpv-global-ic`.
//
// # Safety
//
// `scenario` and `method` must be NUL-terminated strings; `l2` and `linf`
// must each point to writable storage for 6 doubles.
enum MaglevStatus maglev_run_metrics(const struct MaglevExperiment *handle,
                                     const char *scenario,
                                     const char *method,
                                     double *l2,
                                     double *linf);

// Simulates one scenario under one feedforward method and writes the full
// sample record as CSV to `path` (same layout as the `maglev simulate`
// artifacts).
//
// # Safety
//
// `scenario`, `method`, and `path` must be NUL-terminated strings.
enum MaglevStatus maglev_run_to_csv(const struct MaglevExperiment *handle,
                                    const char *scenario,
                                    const char *method,
                                    const char *path);

// Runs the Lyapunov certificate search on the handle's configuration and
// writes the largest certified energy-mixing parameter to `epsilon`.
//
// Returns `RUN_ERROR` when no feasible parameter exists or when the
// certified rate condition fails on some sample of the verification run.
//
// # Safety
//
// `epsilon` must point to writable storage for one double.
enum MaglevStatus maglev_stability_epsilon(const struct MaglevExperiment *handle, double *epsilon);

// Evaluates the configuration-dependent mass matrix at the coordinates `q`
// and writes it to `out` as 36 doubles in row-major order.
//
// # Safety
//
// `q` must point to 6 readable doubles and `out` to 36 writable doubles.
enum MaglevStatus maglev_mass_matrix(const struct MaglevExperiment *handle,
                                     const double *q,
                                     double *out);

// Solves the plant's forward dynamics at coordinates `q`, velocities `qd`,
// and applied generalized forces `u`, writing the accelerations to `qdd`.
//
// Returns `RUN_ERROR` if the mass matrix is not positive definite at `q`
// (the pitch angle reached the representation boundary).
//
// # Safety
//
// `q`, `qd`, and `u` must each point to 6 readable doubles and `qdd` to 6
// writable doubles.
enum MaglevStatus maglev_forward_dynamics(const struct MaglevExperiment *handle,
                                          const double *q,
                                          const double *qd,
                                          const double *u,
                                          double *qdd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGLEV_H */
