#ifndef FEDSLATE_H
#define FEDSLATE_H

/* Generated by cbindgen from the fedslate-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  FSL_STATUS_OK = 0,
  /**
   * A pointer argument was null or otherwise unusable.
   */
  FSL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The configuration failed to parse or validate.
   */
  FSL_STATUS_INVALID_CONFIG = 2,
  /**
   * Training or evaluation failed at runtime.
   */
  FSL_STATUS_RUNTIME_ERROR = 3,
  /**
   * A panic was caught at the boundary.
   */
  FSL_STATUS_PANIC = 4,
} FslStatus;

/**
 * Opaque experiment handle.
 */
typedef struct FslRunner FslRunner;

/**
 * One metrics row, mirroring the metrics CSV columns.
 */
typedef struct {
  uint64_t episode;
  double return_a;
  double return_b;
  double epsilon;
  double loss_alpha;
  double loss_beta;
  uint64_t wall_ms;
} FslMetricsRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *fsl_version(void);

/**
 * The most recent error message on this thread, or null when the last call
 * succeeded. Free with [`fsl_string_free`].
 */
char *fsl_last_error_message(void);

/**
 * Free a string allocated by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library and not yet
 * freed; null is accepted and ignored.
 */
void fsl_string_free(char *s);

/**
 * Create an experiment from a JSON configuration string. On success writes
 * the handle through `out` and returns `Ok`.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string and `out` a valid
 * pointer; the returned handle must be released with [`fsl_runner_free`]
 * or [`fsl_runner_finish`].
 */
FslStatus fsl_runner_new(const char *config_json, FslRunner **out);

/**
 * Advance a runner by `count` episodes.
 *
 * # Safety
 * `runner` must be a live handle from [`fsl_runner_new`].
 */
FslStatus fsl_runner_run_episodes(FslRunner *runner, uint64_t count);

/**
 * Number of completed episodes.
 *
 * # Safety
 * `runner` must be a live handle from [`fsl_runner_new`] or null.
 */
uint64_t fsl_runner_episodes_done(const FslRunner *runner);

/**
 * Copy the metrics row of one episode into `out_row`.
 *
 * # Safety
 * `runner` must be a live handle and `out_row` a valid pointer.
 */
FslStatus fsl_runner_metrics_row(const FslRunner *runner, uint64_t episode, FslMetricsRow *out_row);

/**
 * Finish a runner: write the configured outputs (metrics CSV, checkpoint,
 * logs) and release the handle. The handle is consumed even on failure.
 *
 * # Safety
 * `runner` must be a live handle from [`fsl_runner_new`]; it must not be
 * used afterwards.
 */
FslStatus fsl_runner_finish(FslRunner *runner);

/**
 * Release a runner without writing outputs.
 *
 * # Safety
 * `runner` must be a handle from [`fsl_runner_new`] or null.
 */
void fsl_runner_free(FslRunner *runner);

/**
 * Run a whole experiment from a JSON configuration. Outputs go to the
 * configured output directory.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string.
 */
FslStatus fsl_run_experiment(const char *config_json);

/**
 * Episodes-to-reach-optimal-reward over a return series. Writes -1 to
 * `out_m_prime` (and NaN to `out_optimal`) when the series does not
 * converge.
 *
 * # Safety
 * `values` must point to `len` readable doubles; the out pointers must be
 * valid.
 */
FslStatus fsl_etror(const double *values,
                    uintptr_t len,
                    double epsilon_term,
                    uintptr_t window,
                    int64_t *out_m_prime,
                    double *out_optimal);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSLATE_H */
