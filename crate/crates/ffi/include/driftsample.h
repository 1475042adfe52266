/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef DRIFTSAMPLE_H
#define DRIFTSAMPLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_PARAMETER = 2,
  DS_STATUS_INVALID_SCHEDULE = 3,
  DS_STATUS_NO_FIXED_POINT = 4,
  DS_STATUS_NOT_CONVERGED = 5,
  DS_STATUS_UNSUPPORTED = 6,
  DS_STATUS_INFEASIBLE = 7,
  DS_STATUS_INTERNAL = 8,
  DS_STATUS_CONFIG = 9,
  DS_STATUS_IO = 10,
  DS_STATUS_PANIC = 11,
} DsStatus;

/**
 * Gaussian model parameters.
 */
typedef struct DsModel DsModel;

/**
 * Optimizer output.
 */
typedef struct DsOptResult DsOptResult;

/**
 * Per-round variance trace.
 */
typedef struct DsTrace DsTrace;

/**
 * Summary of a threshold-policy run on the two-state model.
 */
typedef struct DsBinarySummary {
  double accuracy;
  double mean_samples;
  double median_samples;
  size_t cap_hits;
} DsBinarySummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *ds_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

/**
 * Creates a model. `v0 < 0` selects the default prior `rho`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DsStatus ds_model_new(double rho,
                           double sigma,
                           double c,
                           double budget,
                           double z,
                           double v0,
                           bool fractional_samples,
                           struct DsModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`ds_model_new`] not yet freed.
 */
void ds_model_free(struct DsModel *model);

/**
 * One round of the variance recursion from `v` with `s` samples.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DsStatus ds_kalman_step(const struct DsModel *model, double v, double s, double *out);

/**
 * Simulates `len` rounds of explicit sample counts from the model's `v0`.
 *
 * # Safety
 * `model` must be a live handle, `samples` must point to `len` doubles
 * (may be null when `len == 0`), and `out` must be writable.
 */
enum DsStatus ds_simulate(const struct DsModel *model,
                          const double *samples,
                          size_t len,
                          struct DsTrace **out);

/**
 * One period of the steady state of the periodic schedule `period[0..len]`.
 *
 * # Safety
 * As for [`ds_simulate`].
 */
enum DsStatus ds_steady_state(const struct DsModel *model,
                              const double *period,
                              size_t len,
                              struct DsTrace **out);

/**
 * Number of rounds in the trace; zero for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t ds_trace_len(const struct DsTrace *trace);

/**
 * Average loss `min(v, c)` and average value `max(c − v, 0)` of the trace.
 * Either output pointer may be null.
 *
 * # Safety
 * `trace` must be a live handle; non-null outputs must be writable.
 */
enum DsStatus ds_trace_summary(const struct DsTrace *trace, double *cost, double *value);

/**
 * Copies up to `cap` posterior variances into `buf` and returns how many
 * the trace holds (so a call with `cap == 0` queries the size).
 *
 * # Safety
 * `trace` must be null or a live handle; `buf` must have room for `cap` doubles.
 */
size_t ds_trace_posteriors(const struct DsTrace *trace, double *buf, size_t cap);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void ds_trace_free(struct DsTrace *trace);

/**
 * Best on-off policy of the given period.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DsStatus ds_optimize_onoff(const struct DsModel *model,
                                size_t period,
                                struct DsOptResult **out);

/**
 * Best on-off value over doubling periods, to within `tol` of the limit.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DsStatus ds_vstar(const struct DsModel *model, double tol, struct DsOptResult **out);

/**
 * Best lazy policy.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DsStatus ds_optimize_lazy(const struct DsModel *model, struct DsOptResult **out);

/**
 * Long-run value of the optimizer's policy; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double ds_result_value(const struct DsOptResult *result);

/**
 * Long-run average loss `c − value`; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double ds_result_cost(const struct DsOptResult *result);

/**
 * Full result as JSON. Release the string with [`ds_string_free`].
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum DsStatus ds_result_json(const struct DsOptResult *result, char **out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void ds_result_free(struct DsOptResult *result);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void ds_string_free(char *s);

/**
 * Runs the threshold policy `theta` for `horizon` rounds.
 *
 * # Safety
 * `out` must be writable.
 */
enum DsStatus ds_binary_run(double eps,
                            double delta_sig,
                            double theta,
                            size_t horizon,
                            uint64_t seed,
                            struct DsBinarySummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRIFTSAMPLE_H */
