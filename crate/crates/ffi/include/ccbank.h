#ifndef CCBANK_H
#define CCBANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Estimator selector for `ccb_shapley`.
 */
typedef enum CcbEstimator {
  CCB_ESTIMATOR_EXACT = 0,
  CCB_ESTIMATOR_PERMUTATION = 1,
} CcbEstimator;

/**
 * Result of every fallible call.
 */
typedef enum CcbStatus {
  CCB_STATUS_OK = 0,
  CCB_STATUS_NULL_POINTER = 1,
  CCB_STATUS_INVALID_ARGUMENT = 2,
  CCB_STATUS_TOO_MANY_TOKENS = 3,
  CCB_STATUS_ORACLE_UNREACHABLE = 4,
  CCB_STATUS_CONTEXT_TOO_LONG = 5,
  CCB_STATUS_PROTOCOL_ERROR = 6,
  /**
   * Shapley values with next to no mass, or a zero-norm profile.
   */
  CCB_STATUS_DEGENERATE = 7,
  /**
   * A statistic that is not defined for the given data.
   */
  CCB_STATUS_UNDEFINED = 8,
  /**
   * A caller-provided buffer is too small.
   */
  CCB_STATUS_BUFFER_TOO_SMALL = 9,
  CCB_STATUS_DATA_ERROR = 10,
  CCB_STATUS_IO_ERROR = 11,
  CCB_STATUS_PANIC = 12,
  CCB_STATUS_OTHER = 13,
} CcbStatus;

/**
 * A model handle.
 */
typedef struct CcbOracle CcbOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *ccb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccb_version(void);

/**
 * Built-in toy model whose weights are drawn with `seed`.
 */
struct CcbOracle *ccb_oracle_toy(uint64_t seed);

/**
 * Client for an oracle server at `base_url`. Returns null if the URL is
 * null or not UTF-8. No connection is made until first use.
 *
 * # Safety
 * `base_url` must be null or a valid NUL-terminated string.
 */
struct CcbOracle *ccb_oracle_http(const char *base_url);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `oracle` must be null or a handle from `ccb_oracle_*` not yet freed.
 */
void ccb_oracle_free(struct CcbOracle *oracle);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned through an out-parameter of this
 * library, not yet freed.
 */
void ccb_string_free(char *s);

/**
 * Shapley values for `target` following the prompt `ids`.
 *
 * `maskable[i]` non-zero marks `ids[i]` as a player; all other positions
 * stay visible in every coalition. `phi_out` receives one value per
 * player, in prompt order, and must hold `phi_capacity >= players`.
 * `base_out` and `explained_out` (either may be null) receive the target
 * probability with every player masked and with none masked.
 * `num_permutations` and `seed` only apply to the permutation estimator;
 * `exact_limit` only to the exact one.
 *
 * # Safety
 * `ids` and `maskable` must point to `len` elements; `phi_out` to
 * `phi_capacity` elements.
 */
enum CcbStatus ccb_shapley(const struct CcbOracle *oracle,
                           const uint32_t *ids,
                           const uint8_t *maskable,
                           size_t len,
                           uint32_t target,
                           enum CcbEstimator estimator,
                           size_t exact_limit,
                           size_t num_permutations,
                           uint64_t seed,
                           double *phi_out,
                           size_t phi_capacity,
                           double *base_out,
                           double *explained_out);

/**
 * Contribution ratios `phi / sum |phi|` into `out` (same length).
 * Returns `Degenerate` when the L1 mass is below `epsilon`.
 *
 * # Safety
 * `phi` and `out` must point to `len` elements.
 */
enum CcbStatus ccb_ratios(const double *phi, size_t len, double epsilon, double *out);

/**
 * Averages `count` ratio vectors of length `len`, stored row after row in
 * `rows`, into `out`. Rows flagged non-zero in `degenerate` (may be null)
 * are skipped.
 *
 * # Safety
 * `rows` must point to `count * len` elements, `degenerate` to `count`
 * elements or be null, and `out` to `len` elements.
 */
enum CcbStatus ccb_aggregate(const double *rows,
                             size_t count,
                             size_t len,
                             const uint8_t *degenerate,
                             double *out);

/**
 * CC-SHAP score of two contribution profiles of length `len`.
 *
 * # Safety
 * `prediction` and `explanation` must point to `len` elements; `out` to one.
 */
enum CcbStatus ccb_cc_shap(const double *prediction,
                           const double *explanation,
                           size_t len,
                           double *out);

/**
 * Point-biserial correlation. Returns `Undefined` when either class is
 * empty or the continuous values are constant.
 *
 * # Safety
 * `binary` and `continuous` must point to `len` elements; `out` to one.
 */
enum CcbStatus ccb_point_biserial(const uint8_t *binary,
                                  const double *continuous,
                                  size_t len,
                                  double *out);

/**
 * Maps a CC-SHAP score from [-1, 1] to [0, 100].
 *
 * # Safety
 * `out` must point to one writable double.
 */
enum CcbStatus ccb_rescale_cc_shap(double score, double *out);

/**
 * Runs a test suite. `config_json` holds a run configuration (unset fields
 * take their defaults); `dataset_path` may be null to use generated
 * instances. Records go to `results_path`. On success `manifest_out` (may
 * be null) receives the run manifest as JSON.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings (or null where
 * allowed); `manifest_out` must be null or point to a writable pointer.
 */
enum CcbStatus ccb_run(const struct CcbOracle *oracle,
                       const char *config_json,
                       const char *dataset_path,
                       const char *results_path,
                       char **manifest_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CCBANK_H */
