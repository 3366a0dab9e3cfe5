#ifndef LASER_H
#define LASER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LASER_FORMAT_MOVIELENS_DAT 0

#define LASER_FORMAT_CSV 1

#define LASER_FORMAT_DENSE_TSV 2

#define LASER_MODEL_DMF 0

#define LASER_MODEL_NMF 1

#define LASER_ORDER_SEQTRAIN 0

#define LASER_ORDER_ANTI_SEQTRAIN 1

#define LASER_SOURCE_COLLAB_EMBEDDING 0

#define LASER_SOURCE_RAW_RATINGS 1

#define LASER_SOURCE_RANDOM 2

typedef enum LaserStatus {
  LASER_STATUS_OK = 0,
  LASER_STATUS_NULL_ARGUMENT = 1,
  LASER_STATUS_INVALID_ARGUMENT = 2,
  LASER_STATUS_IO = 3,
  LASER_STATUS_PARSE = 4,
  LASER_STATUS_EMPTY_DATASET = 5,
  LASER_STATUS_PRECONDITION = 6,
  LASER_STATUS_CONFIG = 7,
  LASER_STATUS_OUT_OF_RANGE = 8,
  LASER_STATUS_FORMAT = 9,
  LASER_STATUS_DIVERGENCE = 10,
  LASER_STATUS_EMPTY_GROUP = 11,
  LASER_STATUS_UNKNOWN_USER = 12,
  LASER_STATUS_MISSING_USER = 13,
  LASER_STATUS_MISSING_ARTIFACT = 14,
  LASER_STATUS_PANIC = 15,
} LaserStatus;

// A trained checkpoint chain together with the data it currently covers.
typedef struct LaserChain LaserChain;

// Train/test split of an ingested ratings file.
typedef struct LaserDataset LaserDataset;

typedef struct LaserPlan LaserPlan;

typedef struct LaserTrainOptions {
  // Epochs per group.
  size_t epochs;
  size_t batch_size;
  size_t negatives_per_positive;
  double learning_rate;
  uint64_t seed;
} LaserTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next `laser_*` call on the same thread.
const char *laser_last_error(void);

struct LaserTrainOptions laser_train_options_default(void);

// Load a ratings file, filter users and items with fewer than
// `min_interactions` ratings, and split each user's ratings.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum LaserStatus laser_dataset_load(const char *path,
                                    uint32_t format,
                                    size_t min_interactions,
                                    double train_fraction,
                                    uint64_t seed,
                                    struct LaserDataset **out);

// # Safety
// `dataset` must be null or a live dataset handle.
size_t laser_dataset_n_users(const struct LaserDataset *dataset);

// # Safety
// `dataset` must be null or a live dataset handle.
size_t laser_dataset_n_items(const struct LaserDataset *dataset);

// # Safety
// `dataset` must be null or a live dataset handle.
size_t laser_dataset_n_train(const struct LaserDataset *dataset);

// # Safety
// `dataset` must be null or a handle from `laser_dataset_load` that has
// not been freed.
void laser_dataset_free(struct LaserDataset *dataset);

// Balanced groups of the dataset's users and their training order.
//
// # Safety
// `dataset` must be a live dataset handle and `out` writable.
enum LaserStatus laser_plan_create(const struct LaserDataset *dataset,
                                   size_t n_groups,
                                   uint32_t source,
                                   uint64_t seed,
                                   struct LaserPlan **out);

// # Safety
// `plan` must be null or a live plan handle.
size_t laser_plan_n_groups(const struct LaserPlan *plan);

// Group of `user` and its position in the training order.
//
// # Safety
// `plan` must be a live plan handle; `out_group` and `out_position` must
// be writable.
enum LaserStatus laser_plan_group_of(const struct LaserPlan *plan,
                                     size_t user,
                                     size_t *out_group,
                                     size_t *out_position);

// # Safety
// `plan` must be null or a handle from `laser_plan_create` that has not
// been freed.
void laser_plan_free(struct LaserPlan *plan);

// Train a checkpoint chain over the plan's groups, storing checkpoints
// under `dir`.
//
// # Safety
// `dataset`, `plan` and `options` must be live; `dir` NUL-terminated;
// `out` writable.
enum LaserStatus laser_learn(const struct LaserDataset *dataset,
                             const struct LaserPlan *plan,
                             uint32_t model,
                             uint32_t train_order,
                             const struct LaserTrainOptions *options,
                             const char *dir,
                             struct LaserChain **out);

// Erase every rating of the given users and update the chain in place.
// `out_position` receives the first retrained position of the order.
//
// # Safety
// `chain` must be a live chain handle not used concurrently; `users` must
// point to `n_users` readable values; `out_position` may be null.
enum LaserStatus laser_unlearn(struct LaserChain *chain,
                               const size_t *users,
                               size_t n_users,
                               size_t *out_position);

// Predicted preference of `user` for `item` under the served model.
//
// # Safety
// `chain` must be a live chain handle and `out_score` writable.
enum LaserStatus laser_predict(const struct LaserChain *chain,
                               size_t user,
                               size_t item,
                               double *out_score);

// NDCG@10 and HR@10 on held-out ratings of users still in the model.
//
// # Safety
// `chain` must be a live chain handle; both outputs writable.
enum LaserStatus laser_evaluate(const struct LaserChain *chain,
                                uint64_t seed,
                                double *out_ndcg,
                                double *out_hr);

// # Safety
// `chain` must be null or a handle from `laser_learn` that has not been
// freed. Checkpoint files on disk are left in place.
void laser_chain_free(struct LaserChain *chain);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LASER_H */
