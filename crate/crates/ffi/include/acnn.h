#ifndef ACNN_H
#define ACNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum AcnnStatus {
  ACNN_STATUS_OK = 0,
  ACNN_STATUS_NULL_POINTER = 1,
  ACNN_STATUS_INVALID_UTF8 = 2,
  ACNN_STATUS_IO = 3,
  ACNN_STATUS_BAD_CHECKPOINT = 4,
  ACNN_STATUS_WRONG_TASK = 5,
  ACNN_STATUS_INVALID_ARGUMENT = 6,
  ACNN_STATUS_BUFFER_TOO_SMALL = 7,
  ACNN_STATUS_INTERNAL = 8,
} AcnnStatus;

typedef enum AcnnTask {
  ACNN_TASK_CLASSIFY = 0,
  ACNN_TASK_MATCH = 1,
} AcnnTask;

/**
 * Opaque handle to a loaded checkpoint.
 */
typedef struct AcnnModel AcnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file. On success `*out_model` owns a handle that must be
 * released with `acnn_model_free`.
 *
 * # Safety
 * `path` must be a valid C string and `out_model` a valid pointer.
 */
enum AcnnStatus acnn_model_load(const char *path, struct AcnnModel **out_model);

/**
 * Releases a handle from `acnn_model_load`. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void acnn_model_free(struct AcnnModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out_task` a valid pointer.
 */
enum AcnnStatus acnn_model_task(const struct AcnnModel *model, enum AcnnTask *out_task);

/**
 * Number of classes (2 for matching models).
 *
 * # Safety
 * `model` must be a live handle and `out_n` a valid pointer.
 */
enum AcnnStatus acnn_model_num_classes(const struct AcnnModel *model, size_t *out_n);

/**
 * Classifies `text`. Writes the arg-max class to `*out_label` and, when
 * `logits` is non-null, the class logits to `logits[0..n_classes]`;
 * `logits_len` smaller than the class count yields `BufferTooSmall`.
 *
 * # Safety
 * `logits` must be null or point to `logits_len` writable doubles.
 */
enum AcnnStatus acnn_classify(const struct AcnnModel *model,
                              const char *text,
                              size_t *out_label,
                              double *logits,
                              size_t logits_len);

/**
 * Relevance probability of `answer` for `question`.
 *
 * # Safety
 * `model` must be a live handle; strings must be valid C strings.
 */
enum AcnnStatus acnn_match_score(const struct AcnnModel *model,
                                 const char *question,
                                 const char *answer,
                                 double *out_score);

/**
 * MAP and MRR over `n_groups` groups laid out back to back: group `i` owns
 * the next `group_sizes[i]` entries of `scores` and `labels` (0 or 1).
 * Groups without a positive are skipped; none at all is `InvalidArgument`.
 *
 * # Safety
 * `scores` and `labels` must hold the sum of `group_sizes` entries.
 */
enum AcnnStatus acnn_ranking_metrics(const double *scores,
                                     const uint8_t *labels,
                                     const size_t *group_sizes,
                                     size_t n_groups,
                                     double *out_map,
                                     double *out_mrr);

/**
 * Message of the last failure on this thread, or an empty string. Valid
 * until the next failing call on the same thread.
 */
const char *acnn_last_error(void);

/**
 * Library version as a static C string.
 */
const char *acnn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACNN_H */
