#ifndef LANGFIELD_H
#define LANGFIELD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes of all fallible calls.
 */
typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_ARGUMENT = 1,
  LF_STATUS_INVALID_UTF8 = 2,
  LF_STATUS_IO = 3,
  LF_STATUS_FORMAT = 4,
  LF_STATUS_VALIDATION = 5,
  LF_STATUS_PRECONDITION = 6,
  LF_STATUS_CONFIG = 7,
  LF_STATUS_NON_FINITE = 8,
  LF_STATUS_GENERATION = 9,
  LF_STATUS_BUFFER_TOO_SMALL = 10,
  LF_STATUS_PANIC = 11,
} LfStatus;

/*
 A label catalog loaded from `labels.tsv`.
 */
typedef struct LfCatalog LfCatalog;

/*
 A validated dataset directory.
 */
typedef struct LfDataset LfDataset;

/*
 A trained field loaded from a checkpoint.
 */
typedef struct LfModel LfModel;

/*
 Pinhole intrinsics in pixels.
 */
typedef struct LfIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  size_t width;
  size_t height;
} LfIntrinsics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *lf_last_error(void);

/*
 Library version as a static nul-terminated string.
 */
const char *lf_version(void);

/*
 Loads a VLFC checkpoint.
 */
enum LfStatus lf_model_load(const char *path, struct LfModel **out);

void lf_model_free(struct LfModel *model);

/*
 Feature dimension of the model, 0 for a null handle.
 */
size_t lf_model_feature_dim(const struct LfModel *model);

/*
 Evaluates the field at a world point inside the scene bound. `feature`
 receives `lf_model_feature_dim` values and may be null.
 */
enum LfStatus lf_model_eval_point(const struct LfModel *model,
                                  const float *point,
                                  float *sigma,
                                  float *rgb,
                                  float *feature,
                                  size_t feature_len);

/*
 Renders a view from a row-major camera-to-world `pose` (16 values).
 `rgb` takes H*W*3 values, `depth` H*W plane depths, `feature` H*W*D and
 may be null. `seed` < 0 samples bin midpoints.
 */
enum LfStatus lf_model_render(const struct LfModel *model,
                              const double *pose,
                              const struct LfIntrinsics *intrinsics,
                              double near,
                              double far,
                              size_t samples,
                              int64_t seed,
                              float *rgb,
                              size_t rgb_len,
                              float *depth,
                              size_t depth_len,
                              float *feature,
                              size_t feature_len);

/*
 Loads and validates a `labels.tsv` catalog.
 */
enum LfStatus lf_catalog_load(const char *path, struct LfCatalog **out);

void lf_catalog_free(struct LfCatalog *catalog);

/*
 Number of labels, 0 for a null handle.
 */
size_t lf_catalog_len(const struct LfCatalog *catalog);

/*
 Embedding dimension, 0 for a null handle.
 */
size_t lf_catalog_dim(const struct LfCatalog *catalog);

/*
 Index of a label name, or -1 when absent.
 */
int64_t lf_catalog_index(const struct LfCatalog *catalog, const char *name);

/*
 Classifies `pixels` feature vectors of the catalog's dimension (row-major)
 by highest dot product (`cosine` nonzero for cosine similarity).
 */
enum LfStatus lf_classify(const struct LfCatalog *catalog,
                          const float *features,
                          size_t pixels,
                          int32_t cosine,
                          uint32_t *classes,
                          size_t classes_len);

/*
 Loads and validates a dataset directory.
 */
enum LfStatus lf_dataset_load(const char *path, struct LfDataset **out);

void lf_dataset_free(struct LfDataset *ds);

size_t lf_dataset_frame_count(const struct LfDataset *ds);

/*
 Feature dimension of the frames, 0 when they carry no features.
 */
size_t lf_dataset_feature_dim(const struct LfDataset *ds);

/*
 Intrinsics shared by all frames.
 */
enum LfStatus lf_dataset_intrinsics(const struct LfDataset *ds, struct LfIntrinsics *out);

/*
 Row-major camera-to-world pose of frame `index` into 16 values.
 */
enum LfStatus lf_dataset_pose(const struct LfDataset *ds,
                              size_t index,
                              double *pose,
                              size_t pose_len);

/*
 Near and far ray distances of the dataset.
 */
enum LfStatus lf_dataset_bounds(const struct LfDataset *ds, double *near, double *far);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LANGFIELD_H */
