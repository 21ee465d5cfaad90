#ifndef CODEDVTR_H
#define CODEDVTR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CvtrStatus {
  CVTR_STATUS_OK = 0,
  /**
   * Bad argument, shape or configuration.
   */
  CVTR_STATUS_INVALID = 1,
  /**
   * Non-finite values or a failed numerical check.
   */
  CVTR_STATUS_NUMERICAL = 2,
  /**
   * File missing, unreadable or malformed.
   */
  CVTR_STATUS_IO = 3,
  CVTR_STATUS_NULL_POINTER = 4,
  /**
   * Output buffer smaller than required.
   */
  CVTR_STATUS_BUFFER_TOO_SMALL = 5,
  CVTR_STATUS_PANIC = 6,
} CvtrStatus;

/**
 * Voxelized point cloud.
 */
typedef struct CvtrGrid CvtrGrid;

/**
 * Trained network loaded from a checkpoint.
 */
typedef struct CvtrModel CvtrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *cvtr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cvtr_version(void);

/**
 * Voxelizes `n` points (`xyz` holds `3 n` doubles). `labels` may be null;
 * otherwise it holds `n` class ids.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum CvtrStatus cvtr_grid_from_points(const double *xyz,
                                      const uint32_t *labels,
                                      size_t n,
                                      double voxel_size,
                                      struct CvtrGrid **out);

/**
 * Number of occupied voxels; 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
size_t cvtr_grid_len(const struct CvtrGrid *grid);

/**
 * Writes `3 len` voxel coordinates in the grid's canonical order.
 *
 * # Safety
 * `grid` must be a live handle and `out` valid for `cap` values.
 */
enum CvtrStatus cvtr_grid_coords(const struct CvtrGrid *grid, int32_t *out, size_t cap);

/**
 * Writes one 27-bit occupancy mask per voxel at `dilation`.
 *
 * # Safety
 * `grid` must be a live handle and `out` valid for `cap` values.
 */
enum CvtrStatus cvtr_grid_occupancy(const struct CvtrGrid *grid,
                                    uint32_t dilation,
                                    uint32_t *out,
                                    size_t cap);

/**
 * # Safety
 * `grid` must be null or a handle not yet freed.
 */
void cvtr_grid_free(struct CvtrGrid *grid);

/**
 * K-modes over `n` 27-bit masks with `m` clusters. Writes `m` centroids,
 * and when non-null, `n` cluster indices and the total Hamming cost.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum CvtrStatus cvtr_kmodes(const uint32_t *masks,
                            size_t n,
                            size_t m,
                            uint64_t seed,
                            size_t restarts,
                            uint32_t *centroids,
                            uint32_t *assignment,
                            double *cost);

/**
 * Loads a checkpoint written by `codedvtr train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CvtrStatus cvtr_model_load(const char *path, struct CvtrModel **out);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cvtr_model_param_count(const struct CvtrModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cvtr_model_classes(const struct CvtrModel *model);

/**
 * Predicts a class for each of `n` points; points in the same voxel share
 * the voxel's prediction.
 *
 * # Safety
 * `model` must be a live handle, `xyz` valid for `3 n` doubles and `out`
 * for `cap` values.
 */
enum CvtrStatus cvtr_model_predict(const struct CvtrModel *model,
                                   const double *xyz,
                                   size_t n,
                                   uint32_t *out,
                                   size_t cap);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void cvtr_model_free(struct CvtrModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CODEDVTR_H */
