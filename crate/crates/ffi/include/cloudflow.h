/*
 * C interface to the cloudflow conditional-flow point-cloud model.
 *
 * Every function that can fail returns a CfStatus; CF_STATUS_OK is zero.
 * After a failure, cf_last_error_message() describes what went wrong.
 * Point clouds travel as row-major double buffers of length 3 * n_points
 * (x0 y0 z0 x1 y1 z1 ...).
 */

#ifndef CLOUDFLOW_H
#define CLOUDFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. `CF_STATUS_OK` is zero; anything else is
 * an error whose text is available from `cf_last_error_message()`.
 */
typedef enum CfStatus {
  /**
   * The call succeeded.
   */
  CF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CF_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or otherwise unusable.
   */
  CF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The operating system reported an I/O failure.
   */
  CF_STATUS_IO = 3,
  /**
   * A file was readable but not a usable checkpoint or cloud.
   */
  CF_STATUS_BAD_DATA = 4,
  /**
   * A computation produced non-finite values or failed a numeric check.
   */
  CF_STATUS_NUMERICAL = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  CF_STATUS_PANIC = 6,
} CfStatus;

/**
 * Floating-point precision a model was trained in.
 */
typedef enum CfPrecision {
  CF_PRECISION_F32 = 0,
  CF_PRECISION_F64 = 1,
} CfPrecision;

/**
 * Opaque handle to a loaded model. Create with `cf_model_load`, release
 * with `cf_model_free`. The handle is immutable, so sharing it across
 * threads for concurrent reads is safe; the per-thread error message is
 * the only thread-local state.
 */
typedef struct CfModel CfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *cf_version(void);

/**
 * Returns a static name for a status code, e.g. `"ok"` or `"io"`.
 */
const char *cf_status_name(enum CfStatus status);

/**
 * Returns the message of the most recent failure on the calling thread,
 * or an empty string if nothing has failed yet. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *cf_last_error_message(void);

/**
 * Loads a model checkpoint. The file records its own precision; the
 * returned handle dispatches to the right implementation internally.
 * On success, `*out_model` owns the model until `cf_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_model` a valid pointer.
 */
enum CfStatus cf_model_load(const char *path, struct CfModel **out_model);

/**
 * Releases a model handle. A null handle is a no-op.
 *
 * # Safety
 * `model` must have come from `cf_model_load` and not have been freed.
 */
void cf_model_free(struct CfModel *model);

/**
 * Reports the precision the model was trained in.
 *
 * # Safety
 * `model` must be a live handle and `out_precision` a valid pointer.
 */
enum CfStatus cf_model_precision(const struct CfModel *model, enum CfPrecision *out_precision);

/**
 * Reports the length of the model's shape-embedding vector.
 *
 * # Safety
 * `model` must be a live handle and `out_dim` a valid pointer.
 */
enum CfStatus cf_model_embed_dim(const struct CfModel *model, size_t *out_dim);

/**
 * Draws a new cloud from the model. `temperature` scales the embedding
 * prior (1.0 reproduces training conditions, 0.0 gives the mean shape).
 * The same seed always produces the same cloud.
 *
 * # Safety
 * `model` must be a live handle and `out_xyz` must have room for
 * `3 * n_points` doubles.
 */
enum CfStatus cf_model_sample(const struct CfModel *model,
                              size_t n_points,
                              double temperature,
                              uint64_t seed,
                              double *out_xyz);

/**
 * Encodes `in_xyz` and decodes a fresh cloud of `out_points` points from
 * the same embedding.
 *
 * # Safety
 * `model` must be a live handle, `in_xyz` must hold `3 * in_points`
 * doubles, and `out_xyz` must have room for `3 * out_points` doubles.
 */
enum CfStatus cf_model_reconstruct(const struct CfModel *model,
                                   const double *in_xyz,
                                   size_t in_points,
                                   size_t out_points,
                                   uint64_t seed,
                                   double *out_xyz);

/**
 * Writes the shape embedding of a cloud into `out_embedding`, which must
 * hold `cf_model_embed_dim` doubles.
 *
 * # Safety
 * `model` must be a live handle, `in_xyz` must hold `3 * n_points`
 * doubles, and `out_embedding` must have room for the embedding.
 */
enum CfStatus cf_model_embed(const struct CfModel *model,
                             const double *in_xyz,
                             size_t n_points,
                             double *out_embedding);

/**
 * Scores how unusual a cloud's shape is: the negative log-likelihood of
 * its embedding under the model's prior. Higher means rarer; this is the
 * quantity used for outlier ranking.
 *
 * # Safety
 * `model` must be a live handle, `in_xyz` must hold `3 * n_points`
 * doubles, and `out_nll` must be a valid pointer.
 */
enum CfStatus cf_model_embedding_nll(const struct CfModel *model,
                                     const double *in_xyz,
                                     size_t n_points,
                                     double *out_nll);

/**
 * Recovers the canonical pose of a cloud by minimizing its point NLL over
 * rotations, with `restarts` optimizer starts (0 means the default of 4;
 * the first start is always the identity). Writes the recovered rotation
 * as an axis-angle triple into `out_axis_angle`. `out_aligned_xyz` (room
 * for `3 * n_points` doubles), `out_nll`, and `out_identity_nll` may each
 * be null if the caller does not need them.
 *
 * # Safety
 * `model` must be a live handle, `in_xyz` must hold `3 * n_points`
 * doubles, `out_axis_angle` must have room for 3 doubles, and the
 * optional pointers must be valid when non-null.
 */
enum CfStatus cf_model_align(const struct CfModel *model,
                             const double *in_xyz,
                             size_t n_points,
                             size_t restarts,
                             size_t max_generations,
                             uint64_t seed,
                             double *out_axis_angle,
                             double *out_aligned_xyz,
                             double *out_nll,
                             double *out_identity_nll);

/**
 * Chamfer distance between two clouds: the mean squared distance to the
 * nearest neighbor, taken in both directions and summed. The clouds may
 * have different sizes.
 *
 * # Safety
 * `a_xyz` and `b_xyz` must hold `3 * a_points` and `3 * b_points` doubles
 * and `out_distance` must be a valid pointer.
 */
enum CfStatus cf_chamfer(const double *a_xyz,
                         size_t a_points,
                         const double *b_xyz,
                         size_t b_points,
                         double *out_distance);

/**
 * Earth-mover distance between two equal-sized clouds: the mean pointwise
 * distance under the exact minimum-cost matching.
 *
 * # Safety
 * `a_xyz` and `b_xyz` must hold `3 * a_points` and `3 * b_points` doubles
 * and `out_distance` must be a valid pointer.
 */
enum CfStatus cf_emd(const double *a_xyz,
                     size_t a_points,
                     const double *b_xyz,
                     size_t b_points,
                     double *out_distance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOUDFLOW_H */
