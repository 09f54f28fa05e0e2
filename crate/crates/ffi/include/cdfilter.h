#ifndef CDFILTER_H
#define CDFILTER_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum CdfStatus {
  CDF_STATUS_OK = 0,
  CDF_STATUS_NULL_POINTER = 1,
  CDF_STATUS_INVALID_ARGUMENT = 2,
  CDF_STATUS_DIMENSION_MISMATCH = 3,
  CDF_STATUS_NOT_POSITIVE_SEMI_DEFINITE = 4,
  CDF_STATUS_SINGULAR_FACTOR = 5,
  CDF_STATUS_SOLVER_FAILURE = 6,
  CDF_STATUS_DEGENERATE_INNOVATION = 7,
  CDF_STATUS_NON_FINITE = 8,
  CDF_STATUS_CALLBACK_FAILED = 9,
  CDF_STATUS_MISSING_DERIVATIVES = 10,
  CDF_STATUS_PANIC = 11,
  CDF_STATUS_OTHER = 99,
} CdfStatus;

/**
 * Time-update method.
 */
typedef enum CdfPropagator {
  CDF_PROPAGATOR_LSKF_ADAPTIVE = 0,
  CDF_PROPAGATOR_LSKF_RK4 = 1,
  CDF_PROPAGATOR_LSKF_RK2 = 2,
  CDF_PROPAGATOR_CDCKF = 3,
  CDF_PROPAGATOR_CDCKF_PROPER = 4,
} CdfPropagator;

/**
 * Opaque filter handle.
 */
typedef struct CdfFilter CdfFilter;

/**
 * Drift or measurement callback: writes `out_len` values for the input
 * `x[0..x_len]` at time `t`. Return 0 on success; any other value aborts the
 * current call with `CallbackFailed`.
 */
typedef int32_t (*CdfVectorFn)(void *ctx,
                               double t,
                               const double *x,
                               size_t x_len,
                               double *out,
                               size_t out_len);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cdf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdf_version(void);

/**
 * Creates a filter for the coordinated-turn radar model, initialized at the
 * nominal initial state and covariance.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CdfStatus cdf_filter_new_radar(double omega_deg,
                                    double interval_s,
                                    enum CdfPropagator kind,
                                    size_t m,
                                    struct CdfFilter **out);

/**
 * Creates a filter for a user model given by callbacks.
 *
 * `sqrt_k` is the `dim × dim` diffusion factor and `sqrt_r` the
 * `meas_dim × meas_dim` measurement-noise factor, both column-major. The
 * CD-CKF propagators need derivatives of the drift; they are obtained by
 * finite differences. The filter starts at `mean0`, `cov0` at time 0.
 *
 * # Safety
 * All pointers must be valid for the stated lengths; the callbacks and their
 * contexts must stay valid for the lifetime of the handle.
 */
enum CdfStatus cdf_filter_new_callback(size_t dim,
                                       CdfVectorFn drift,
                                       void *drift_ctx,
                                       const double *sqrt_k,
                                       size_t meas_dim,
                                       CdfVectorFn measure,
                                       void *measure_ctx,
                                       const double *sqrt_r,
                                       const double *mean0,
                                       const double *cov0,
                                       enum CdfPropagator kind,
                                       size_t m,
                                       struct CdfFilter **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `filter` must come from a constructor of this library and not be used
 * afterwards.
 */
void cdf_filter_free(struct CdfFilter *filter);

/**
 * State dimension, or 0 for a null handle.
 *
 * # Safety
 * `filter` must be null or a live handle.
 */
size_t cdf_filter_dim(const struct CdfFilter *filter);

/**
 * Replaces the belief with mean `mean[0..dim]` and covariance `cov`
 * (column-major) at time `time`.
 *
 * # Safety
 * Pointers must be valid for `dim` and `dim * dim` values.
 */
enum CdfStatus cdf_filter_set_belief(struct CdfFilter *filter,
                                     double time,
                                     const double *mean,
                                     const double *cov,
                                     size_t dim);

/**
 * Time update to `t1`.
 *
 * # Safety
 * `filter` must be a live handle.
 */
enum CdfStatus cdf_filter_predict(struct CdfFilter *filter, double t1);

/**
 * Measurement update with `y[0..meas_dim]` at the current belief time.
 *
 * # Safety
 * `filter` must be a live handle and `y` valid for `meas_dim` values.
 */
enum CdfStatus cdf_filter_update(struct CdfFilter *filter, const double *y, size_t meas_dim);

/**
 * Predict to `t` then update with `y`.
 *
 * # Safety
 * As for [`cdf_filter_update`].
 */
enum CdfStatus cdf_filter_step(struct CdfFilter *filter,
                               double t,
                               const double *y,
                               size_t meas_dim);

/**
 * Copies the mean into `out[0..len]`; `len` must equal the dimension.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum CdfStatus cdf_filter_mean(const struct CdfFilter *filter, double *out, size_t len);

/**
 * Copies the covariance (column-major) into `out[0..len]`; `len` must be
 * the squared dimension.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum CdfStatus cdf_filter_covariance(const struct CdfFilter *filter, double *out, size_t len);

/**
 * Writes the belief time to `out`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum CdfStatus cdf_filter_time(const struct CdfFilter *filter, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDFILTER_H */
