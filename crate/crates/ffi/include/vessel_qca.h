#ifndef VESSEL_QCA_H
#define VESSEL_QCA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values 2–4 match the command-line exit codes.
 */
typedef enum QcaStatus {
  QCA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  QCA_STATUS_NULL_POINTER = 1,
  QCA_STATUS_IO = 2,
  QCA_STATUS_INVALID_INPUT = 3,
  QCA_STATUS_INVALID_SPEC = 4,
  /**
   * Index past the end of a collection.
   */
  QCA_STATUS_OUT_OF_RANGE = 5,
  /**
   * The result is mathematically undefined (e.g. a zero denominator).
   */
  QCA_STATUS_UNDEFINED = 6,
  QCA_STATUS_INTERNAL = 7,
} QcaStatus;

typedef enum QcaGrade {
  QCA_GRADE_MILD = 1,
  QCA_GRADE_MODERATE = 2,
  QCA_GRADE_SEVERE = 3,
} QcaGrade;

/**
 * Opaque list of findings.
 */
typedef struct QcaFindings QcaFindings;

/**
 * Opaque binary mask.
 */
typedef struct QcaMask QcaMask;

/**
 * Detection settings. Obtain defaults from [`qca_config_default`].
 */
typedef struct QcaConfig {
  double min_mean_diameter;
  double cluster_threshold_tau;
  double report_floor;
  uint32_t max_radius;
  /**
   * Nonzero selects distance-transform radii.
   */
  uint8_t exact;
} QcaConfig;

typedef struct QcaFinding {
  size_t branch_id;
  uint32_t x;
  uint32_t y;
  double r_c;
  double r_s;
  double r_e;
  double eta;
  enum QcaGrade grade;
} QcaFinding;

/**
 * Segmentation scores; an undefined ratio is NaN.
 */
typedef struct QcaSegMetrics {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  uint64_t tn;
  double iou;
  double acc;
  double spe;
  double sen;
  double f1;
} QcaSegMetrics;

/**
 * Count errors; `rrmse` is NaN when every image has zero labels.
 */
typedef struct QcaCountErrors {
  double armse;
  double rrmse;
  size_t rrmse_excluded;
} QcaCountErrors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer is
 * owned by the library and valid until the next failing call on this thread.
 */
const char *qca_last_error(void);

/**
 * Writes the default detection settings to `out`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `QcaConfig`.
 */
enum QcaStatus qca_config_default(struct QcaConfig *out);

/**
 * Builds a mask from `width * height` 8-bit intensities (row-major);
 * foreground is `value >= threshold`.
 *
 * # Safety
 * `pixels` must point to `len` readable bytes and `out` to a writable handle slot.
 */
enum QcaStatus qca_mask_new(uint32_t width,
                            uint32_t height,
                            const uint8_t *pixels,
                            size_t len,
                            uint8_t threshold,
                            struct QcaMask **out);

/**
 * Loads an 8-bit PNG or PGM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum QcaStatus qca_mask_load(const char *path, uint8_t threshold, struct QcaMask **out);

/**
 * # Safety
 * `mask` must be null or a handle from this library that has not been freed.
 */
void qca_mask_free(struct QcaMask *mask);

/**
 * # Safety
 * `mask` must be a live handle; `width` and `height` writable.
 */
enum QcaStatus qca_mask_dims(const struct QcaMask *mask, uint32_t *width, uint32_t *height);

/**
 * Runs the full detection pipeline. `config` may be null for defaults;
 * `threads` of 0 or 1 runs sequentially.
 *
 * # Safety
 * `mask` must be a live handle, `config` null or readable, `out` writable.
 */
enum QcaStatus qca_detect(const struct QcaMask *mask,
                          const struct QcaConfig *config,
                          size_t threads,
                          struct QcaFindings **out);

/**
 * Number of findings; 0 for a null handle.
 *
 * # Safety
 * `findings` must be null or a live handle.
 */
size_t qca_findings_len(const struct QcaFindings *findings);

/**
 * Copies finding `index` (findings are ordered by descending severity).
 *
 * # Safety
 * `findings` must be a live handle and `out` writable.
 */
enum QcaStatus qca_findings_get(const struct QcaFindings *findings,
                                size_t index,
                                struct QcaFinding *out);

/**
 * Findings as a JSON array. Release the string with [`qca_string_free`].
 *
 * # Safety
 * `findings` must be a live handle and `out` writable.
 */
enum QcaStatus qca_findings_json(const struct QcaFindings *findings, char **out);

/**
 * # Safety
 * `findings` must be null or a live handle.
 */
void qca_findings_free(struct QcaFindings *findings);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void qca_string_free(char *s);

/**
 * Pixel confusion counts and derived scores of `pred` against `truth`.
 *
 * # Safety
 * Both masks must be live handles and `out` writable.
 */
enum QcaStatus qca_seg_metrics(const struct QcaMask *pred,
                               const struct QcaMask *truth,
                               struct QcaSegMetrics *out);

/**
 * ARMSE and RRMSE over `n` images with the given predicted and labeled counts.
 *
 * # Safety
 * `predicted` and `labeled` must each point to `n` readable values; `out` writable.
 */
enum QcaStatus qca_count_errors(const uint64_t *predicted,
                                const uint64_t *labeled,
                                size_t n,
                                struct QcaCountErrors *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VESSEL_QCA_H */
