#ifndef POLYFIELD_H
#define POLYFIELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_IO = 3,
  PF_STATUS_FORMAT = 4,
  PF_STATUS_NUMERICAL = 5,
  PF_STATUS_OUT_OF_RANGE = 6,
  PF_STATUS_PANIC = 7,
} PfStatus;

/**
 * A 2-PolyVector field: four channels `[Re c0, Im c0, Re c2, Im c2]` per
 * pixel plus a definition mask.
 */
typedef struct PfField PfField;

/**
 * A grayscale raster image with intensities in `[0, 1]`.
 */
typedef struct PfImage PfImage;

/**
 * A parsed scene.
 */
typedef struct PfScene PfScene;

/**
 * Ground-truth construction parameters. Obtain defaults from
 * [`pf_field_params_default`].
 */
typedef struct PfFieldParams {
  double d_near;
  double d_far;
  double sigma;
  double threshold;
  double stroke_width;
  double intersection_tol;
} PfFieldParams;

/**
 * Variational solver settings. `sigma <= 0` disables target smoothing.
 */
typedef struct PfSolveConfig {
  double gamma;
  size_t max_iters;
  double tol;
  double threshold;
  double sigma;
} PfSolveConfig;

typedef struct PfEvalReport {
  double mse;
  double smoothness;
  double regularized;
  double gamma;
  size_t defined_pixels;
  double alignment_sum;
  double regularized_sum;
} PfEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pf_version(void);

/**
 * Message describing the most recent failure on the calling thread, or an
 * empty string. The pointer stays valid until the next failing call on
 * this thread.
 */
const char *pf_last_error(void);

struct PfFieldParams pf_field_params_default(void);

struct PfSolveConfig pf_solve_config_default(void);

/**
 * Coefficients of the direction pair `(alpha, beta)` written to
 * `out_channels[0..4]`.
 *
 * # Safety
 * `out_channels` must point to four writable doubles.
 */
enum PfStatus pf_encode(double alpha, double beta, double *out_channels);

/**
 * Canonical direction pair of the four channels, with
 * `0 <= alpha <= beta < pi`.
 *
 * # Safety
 * `channels` must point to four readable doubles; the outputs must be
 * writable.
 */
enum PfStatus pf_decode(const double *channels, double *out_alpha, double *out_beta);

/**
 * Parses a scene from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_scene` writable.
 */
enum PfStatus pf_scene_from_json(const char *json, struct PfScene **out_scene);

/**
 * # Safety
 * `scene` must be a live handle and `out_count` writable.
 */
enum PfStatus pf_scene_primitive_count(const struct PfScene *scene, size_t *out_count);

/**
 * # Safety
 * `scene` must be null or a handle not yet freed.
 */
void pf_scene_free(struct PfScene *scene);

/**
 * Renders `scene` and builds its ground-truth field. `params` may be null
 * for defaults; `out_image` may be null if the image is not wanted.
 *
 * # Safety
 * Non-null pointers must be valid for their access.
 */
enum PfStatus pf_ground_truth(const struct PfScene *scene,
                              const struct PfFieldParams *params,
                              struct PfImage **out_image,
                              struct PfField **out_field);

/**
 * Image from `width * height` row-major intensities, clamped to `[0, 1]`.
 *
 * # Safety
 * `data` must point to `width * height` readable doubles.
 */
enum PfStatus pf_image_from_data(uint32_t width,
                                 uint32_t height,
                                 const double *data,
                                 struct PfImage **out_image);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out_image` writable.
 */
enum PfStatus pf_image_read_png(const char *path, struct PfImage **out_image);

/**
 * # Safety
 * `image` must be a live handle and `path` a NUL-terminated string.
 */
enum PfStatus pf_image_write_png(const struct PfImage *image, const char *path);

/**
 * # Safety
 * `image` must be a live handle and the outputs writable.
 */
enum PfStatus pf_image_dims(const struct PfImage *image, uint32_t *out_width, uint32_t *out_height);

/**
 * # Safety
 * `image` must be a live handle and `out_value` writable.
 */
enum PfStatus pf_image_get(const struct PfImage *image, uint32_t x, uint32_t y, double *out_value);

/**
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void pf_image_free(struct PfImage *image);

/**
 * Reads a PVF1 field file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_field` writable.
 */
enum PfStatus pf_field_read(const char *path, struct PfField **out_field);

/**
 * Writes a PVF1 field file; channels are stored as 32-bit floats.
 *
 * # Safety
 * `field` must be a live handle and `path` a NUL-terminated string.
 */
enum PfStatus pf_field_write(const struct PfField *field, const char *path);

/**
 * # Safety
 * `field` must be a live handle and the outputs writable.
 */
enum PfStatus pf_field_dims(const struct PfField *field, uint32_t *out_width, uint32_t *out_height);

/**
 * # Safety
 * `field` must be a live handle and `out_count` writable.
 */
enum PfStatus pf_field_defined_count(const struct PfField *field, size_t *out_count);

/**
 * Channels of pixel `(x, y)`; all zero where the pixel is undefined.
 *
 * # Safety
 * `field` must be a live handle, `out_channels` must point to four
 * writable doubles and `out_defined` must be writable.
 */
enum PfStatus pf_field_get(const struct PfField *field,
                           uint32_t x,
                           uint32_t y,
                           double *out_channels,
                           bool *out_defined);

/**
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void pf_field_free(struct PfField *field);

/**
 * Estimates a field from `image` with the variational solver. `config`
 * may be null for defaults; `out_iterations` and `out_energy` may be null.
 *
 * # Safety
 * Non-null pointers must be valid for their access.
 */
enum PfStatus pf_solve(const struct PfImage *image,
                       const struct PfSolveConfig *config,
                       struct PfField **out_field,
                       size_t *out_iterations,
                       double *out_energy);

/**
 * Compares `pred` with `gt` over the ground truth's defined pixels.
 *
 * # Safety
 * `pred` and `gt` must be live handles and `out_report` writable.
 */
enum PfStatus pf_eval(const struct PfField *pred,
                      const struct PfField *gt,
                      double gamma,
                      struct PfEvalReport *out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYFIELD_H */
