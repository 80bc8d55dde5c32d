/* C interface to the quantstab data-driven quantized-stabilization library. */

#ifndef QUANTSTAB_H
#define QUANTSTAB_H

/* Generated by cbindgen from quantstab-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum QsStatus {
  /**
   * Success.
   */
  QS_STATUS_OK = 0,
  /**
   * Null pointer, malformed UTF-8/JSON, or invalid parameter.
   */
  QS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The synthesis problem is infeasible at the requested density.
   */
  QS_STATUS_INFEASIBLE = 2,
  /**
   * The SDP solver or a numerical routine failed.
   */
  QS_STATUS_NUMERICAL_FAILURE = 3,
  /**
   * A requested quantity is undefined for an unstable closed loop.
   */
  QS_STATUS_UNSTABLE = 4,
  /**
   * Unexpected internal failure (a panic was caught at the boundary).
   */
  QS_STATUS_INTERNAL = 5,
} QsStatus;

/**
 * Opaque synthesis problem: trajectory data, input vector, noise
 * bound, and the derived uncertainty ellipsoid.
 */
typedef struct qs_problem qs_problem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a problem document (X_minus, U, X_plus, B, noise_bound) and
 * returns an owned handle through `out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QsStatus qs_problem_from_json(const char *json, struct qs_problem **out);

/**
 * Releases a problem handle. Accepts null.
 *
 * # Safety
 * `problem` must have come from [`qs_problem_from_json`] and must not
 * be used afterwards.
 */
void qs_problem_free(struct qs_problem *problem);

/**
 * Synthesizes a gain at sector radius `delta`; writes the certificate
 * JSON (with a sampled verification block) to `json_out`.
 *
 * # Safety
 * `problem` must be a live handle and `json_out` a valid pointer.
 */
enum QsStatus qs_stabilize(const struct qs_problem *problem, double delta, char **json_out);

/**
 * Maximizes the sector radius and writes the result JSON (delta_star,
 * rho_star, certificate) to `json_out`.
 *
 * # Safety
 * `problem` must be a live handle and `json_out` a valid pointer.
 */
enum QsStatus qs_coarsest(const struct qs_problem *problem, char **json_out);

/**
 * Writes the informativity report (rank, Slater, boundedness, witness
 * spectral radius) to `json_out`.
 *
 * # Safety
 * `problem` must be a live handle and `json_out` a valid pointer.
 */
enum QsStatus qs_check_data(const struct qs_problem *problem, char **json_out);

/**
 * Builds the rank-deficiency witness at scale `k_scale` and writes it
 * to `json_out`; the document records `full_rank: true` when no
 * witness exists.
 *
 * # Safety
 * `problem` must be a live handle and `json_out` a valid pointer.
 */
enum QsStatus qs_witness(const struct qs_problem *problem, double k_scale, char **json_out);

/**
 * H-infinity norm of K (zI - A - BK)^{-1} B from a JSON document with
 * keys A, B, K.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `norm_out` a valid
 * pointer.
 */
enum QsStatus qs_hinf_norm(const char *json, double *norm_out);

/**
 * Releases a string returned by this library. Accepts null.
 *
 * # Safety
 * `s` must have been returned through a `char **` out-parameter of
 * this library and must not be used afterwards.
 */
void qs_string_free(char *s);

/**
 * Message for the most recent failure on the calling thread, or null.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *qs_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUANTSTAB_H */
