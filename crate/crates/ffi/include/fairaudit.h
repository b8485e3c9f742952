#ifndef FAIRAUDIT_H
#define FAIRAUDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Output formats for [`fa_bundle_render`].
 */
typedef enum FaFormat {
  FA_FORMAT_JSON = 0,
  FA_FORMAT_MARKDOWN = 1,
  FA_FORMAT_RULES = 2,
} FaFormat;

/**
 * Result codes.
 */
typedef enum FaStatus {
  FA_STATUS_OK = 0,
  FA_STATUS_NULL_POINTER = 1,
  FA_STATUS_INVALID_UTF8 = 2,
  FA_STATUS_CONFIG = 3,
  FA_STATUS_DATA = 4,
  FA_STATUS_INVALID_ARGUMENT = 5,
  FA_STATUS_ALL_METHODS_FAILED = 6,
  FA_STATUS_PANIC = 7,
} FaStatus;

/**
 * Opaque audit result.
 */
typedef struct FaBundle FaBundle;

/**
 * Group fairness of one prediction set. Undefined ratios are NaN.
 */
typedef struct FaFairnessReport {
  double accuracy;
  double disparate_impact;
  double average_odds;
  double equal_opportunity;
  double statistical_parity;
} FaFairnessReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into a new string, or
 * returns null when there is none. Free with [`fa_string_free`].
 */
char *fa_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fa_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fa_version(void);

/**
 * Fairness report of `n` predictions. `y`, `yhat` and `privileged` hold
 * one byte per record (nonzero = favorable / privileged).
 *
 * # Safety
 * Each array must hold `n` readable bytes; `out` must be writable.
 */
enum FaStatus fa_fairness_report(const uint8_t *y,
                                 const uint8_t *yhat,
                                 const uint8_t *privileged,
                                 size_t n,
                                 struct FaFairnessReport *out);

/**
 * Treatment-change labels (-1, 0, +1) of mitigated labels against the
 * ground truth, written to `out[0..n]`.
 *
 * # Safety
 * `y` and `y_mitigated` must hold `n` bytes; `out` must hold `n` slots.
 */
enum FaStatus fa_treatment_labels(const uint8_t *y,
                                  const uint8_t *y_mitigated,
                                  size_t n,
                                  int8_t *out);

/**
 * Runs an audit from a JSON config and stores the bundle in `*out`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum FaStatus fa_audit_run(const char *config_json, struct FaBundle **out);

/**
 * Renders a bundle; the new string is stored in `*out`.
 *
 * # Safety
 * `bundle` must come from [`fa_audit_run`]; `out` must be writable.
 */
enum FaStatus fa_bundle_render(const struct FaBundle *bundle, enum FaFormat format, char **out);

/**
 * Number of methods in the bundle, or 0 for null.
 *
 * # Safety
 * `bundle` must be null or come from [`fa_audit_run`].
 */
size_t fa_bundle_method_count(const struct FaBundle *bundle);

/**
 * Releases a bundle. Null is ignored.
 *
 * # Safety
 * `bundle` must come from [`fa_audit_run`] and not have been freed.
 */
void fa_bundle_free(struct FaBundle *bundle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRAUDIT_H */
