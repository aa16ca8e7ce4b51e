#ifndef DGTD_H
#define DGTD_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  DGTD_STATUS_OK = 0,
  DGTD_STATUS_NULL_ARGUMENT = 1,
  DGTD_STATUS_INVALID_UTF8 = 2,
  DGTD_STATUS_UNKNOWN_PRESET = 3,
  DGTD_STATUS_INVALID_CONFIG = 4,
  DGTD_STATUS_DOMAIN_ERROR = 5,
  DGTD_STATUS_DIMENSION_MISMATCH = 6,
  DGTD_STATUS_NOT_CONNECTED = 7,
  DGTD_STATUS_SINGULAR_MATRIX = 8,
  DGTD_STATUS_NON_ERGODIC = 9,
  DGTD_STATUS_NO_CONVERGENCE = 10,
  DGTD_STATUS_BUFFER_TOO_SMALL = 11,
  DGTD_STATUS_IO_ERROR = 12,
  DGTD_STATUS_INTERNAL_ERROR = 13,
} DgtdStatus;

/**
 * A completed simulation run with its trace and reference solution.
 */
typedef struct DgtdRun DgtdRun;

/**
 * An assembled scenario: model, features, communication graph, and run
 * defaults.
 */
typedef struct DgtdScenario DgtdScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread; the pointer stays valid until the
 * next failing call on the same thread.
 */
const char *dgtd_last_error_message(void);

/**
 * Library version string (static storage).
 */
const char *dgtd_version(void);

/**
 * Builds a named preset scenario (chain4, gridworld, single-agent, toy2x2).
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` a valid pointer.
 */
DgtdStatus dgtd_scenario_preset(const char *name, DgtdScenario **out);

/**
 * Loads the scenario section of an experiment spec file (TOML).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
DgtdStatus dgtd_scenario_from_spec_file(const char *path, DgtdScenario **out);

/**
 * Frees a scenario handle. Passing NULL is a no-op.
 *
 * # Safety
 * `scenario` must come from this library and not be freed twice.
 */
void dgtd_scenario_free(DgtdScenario *scenario);

/**
 * Number of agents in the scenario; 0 on NULL.
 *
 * # Safety
 * `scenario` must be a live handle from this library.
 */
uintptr_t dgtd_scenario_num_agents(const DgtdScenario *scenario);

/**
 * Feature dimension q; 0 on NULL.
 *
 * # Safety
 * `scenario` must be a live handle from this library.
 */
uintptr_t dgtd_scenario_feature_dim(const DgtdScenario *scenario);

/**
 * Number of states |S|; 0 on NULL.
 *
 * # Safety
 * `scenario` must be a live handle from this library.
 */
uintptr_t dgtd_scenario_num_states(const DgtdScenario *scenario);

/**
 * Writes the closed-form solution w* (length q) into `out`.
 *
 * # Safety
 * `out` must point to at least `len` writable doubles; `written` may be
 * NULL.
 */
DgtdStatus dgtd_exact_solution(const DgtdScenario *scenario,
                               double *out,
                               uintptr_t len,
                               uintptr_t *written);

/**
 * Writes the four analytic solution bounds (theta, v, mu, w) into `out4`.
 *
 * # Safety
 * `out4` must point to at least 4 writable doubles.
 */
DgtdStatus dgtd_solution_bounds(const DgtdScenario *scenario, double *out4);

/**
 * Runs the stochastic engine for `iterations` steps (0 uses the scenario
 * default) with the given seed, returning a run handle.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
DgtdStatus dgtd_run_simulation(const DgtdScenario *scenario,
                               uint64_t seed,
                               uint64_t iterations,
                               DgtdRun **out);

/**
 * Frees a run handle. Passing NULL is a no-op.
 *
 * # Safety
 * `run` must come from this library and not be freed twice.
 */
void dgtd_run_free(DgtdRun *run);

/**
 * Consensus penalty of the averaged iterate; NaN on NULL.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
double dgtd_run_consensus_penalty(const DgtdRun *run);

/**
 * Max pairwise infinity distance between averaged per-agent weights; NaN on
 * NULL.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
double dgtd_run_max_pairwise_w(const DgtdRun *run);

/**
 * Max over agents of the infinity distance between the averaged weights and
 * w*; NaN on NULL.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
double dgtd_run_solution_error(const DgtdRun *run);

/**
 * Max observed stochastic-gradient norm; NaN on NULL.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
double dgtd_run_empirical_c(const DgtdRun *run);

/**
 * Writes the averaged stacked weights (length N*q) into `out`.
 *
 * # Safety
 * `out` must point to at least `len` writable doubles; `written` may be
 * NULL.
 */
DgtdStatus dgtd_run_averaged_weights(const DgtdRun *run,
                                     double *out,
                                     uintptr_t len,
                                     uintptr_t *written);

/**
 * Exports the run trace as CSV to `path`.
 *
 * # Safety
 * `run` must be a live handle; `path` a valid NUL-terminated string.
 */
DgtdStatus dgtd_run_export_trace_csv(const DgtdRun *run, const char *path);

/**
 * Evaluates the finite-time complexity formulas Omega_1, Omega_2 and their
 * maximum.
 *
 * # Safety
 * The out pointers must each be NULL or valid writable doubles.
 */
DgtdStatus dgtd_sample_complexity(double epsilon,
                                  double delta,
                                  double alpha0,
                                  double c,
                                  double *omega1,
                                  double *omega2,
                                  double *t_required);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGTD_H */
