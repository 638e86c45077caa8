/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#ifndef AGLB_H
#define AGLB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum AglbStatus {
  AGLB_STATUS_OK = 0,
  AGLB_STATUS_NULL_ARGUMENT = 1,
  AGLB_STATUS_INVALID_ARGUMENT = 2,
  AGLB_STATUS_IO = 3,
  AGLB_STATUS_CHECKPOINT = 4,
  AGLB_STATUS_VOCABULARY = 5,
  AGLB_STATUS_NUMERIC = 6,
  AGLB_STATUS_BUFFER_TOO_SMALL = 7,
  AGLB_STATUS_PANIC = 8,
  AGLB_STATUS_OTHER = 9,
} AglbStatus;

/**
 * A loaded language model.
 */
typedef struct AglbModel AglbModel;

/**
 * A list of stimulus trials.
 */
typedef struct AglbTrials AglbTrials;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread ("" after a success). The
 * pointer stays valid until the next call on the same thread.
 */
const char *aglb_last_error(void);

/**
 * Library version, static storage.
 */
const char *aglb_version(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AglbStatus aglb_model_load(const char *path, struct AglbModel **out);

/**
 * Parses a checkpoint from memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` must be writable.
 */
enum AglbStatus aglb_model_from_bytes(const uint8_t *bytes, size_t len, struct AglbModel **out);

/**
 * Serializes a model. With `buf` null or too small, writes the required
 * size to `needed` and returns `BufferTooSmall`.
 *
 * # Safety
 * `buf` must be writable for `cap` bytes when non-null; `needed` writable.
 */
enum AglbStatus aglb_model_to_bytes(const struct AglbModel *model,
                                    uint8_t *buf,
                                    size_t cap,
                                    size_t *needed);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void aglb_model_free(struct AglbModel *model);

/**
 * Vocabulary size, hidden units per layer and layer count.
 *
 * # Safety
 * Output pointers must be writable.
 */
enum AglbStatus aglb_model_dims(const struct AglbModel *model,
                                size_t *vocab_size,
                                size_t *hidden_dim,
                                size_t *num_layers);

/**
 * Index of `token` in the model vocabulary.
 *
 * # Safety
 * `token` NUL-terminated; `out` writable.
 */
enum AglbStatus aglb_model_token_index(const struct AglbModel *model,
                                       const char *token,
                                       size_t *out);

/**
 * Next-word distribution after `prefix`, written to `probs` (length
 * `cap` ≥ vocabulary size). `units` holds `n_units` (layer, index) pairs
 * to ablate.
 *
 * # Safety
 * `prefix` NUL-terminated; `probs` writable for `cap` doubles; `units`
 * readable for `2 * n_units` values when `n_units > 0`.
 */
enum AglbStatus aglb_next_word_distribution(const struct AglbModel *model,
                                            const char *prefix,
                                            const uint32_t *units,
                                            size_t n_units,
                                            bool hidden_only,
                                            double *probs,
                                            size_t cap);

/**
 * Probabilities of the two candidate continuations of `prefix`.
 *
 * # Safety
 * String arguments NUL-terminated; outputs writable; `units` as in
 * [`aglb_next_word_distribution`].
 */
enum AglbStatus aglb_score_pair(const struct AglbModel *model,
                                const char *prefix,
                                const char *correct,
                                const char *wrong,
                                const uint32_t *units,
                                size_t n_units,
                                double *p_correct,
                                double *p_wrong);

/**
 * Generates `n` trials of the named task.
 *
 * # Safety
 * `task` NUL-terminated; `out` writable.
 */
enum AglbStatus aglb_trials_generate(const char *task,
                                     size_t n,
                                     uint64_t seed,
                                     struct AglbTrials **out);

/**
 * # Safety
 * `trials` must be a live handle or null.
 */
size_t aglb_trials_len(const struct AglbTrials *trials);

/**
 * Trials as JSONL; release with [`aglb_string_free`].
 *
 * # Safety
 * `trials` live; `out` writable.
 */
enum AglbStatus aglb_trials_to_jsonl(const struct AglbTrials *trials, char **out);

/**
 * Agreement accuracy (share of targets where the correct form wins) and
 * mean success probability over every target of every trial.
 *
 * # Safety
 * Handles live; outputs writable; `units` as in
 * [`aglb_next_word_distribution`].
 */
enum AglbStatus aglb_trials_evaluate(const struct AglbModel *model,
                                     const struct AglbTrials *trials,
                                     const uint32_t *units,
                                     size_t n_units,
                                     double *accuracy,
                                     double *success_probability);

/**
 * # Safety
 * `trials` must come from this library and not be used afterwards.
 */
void aglb_trials_free(struct AglbTrials *trials);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void aglb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGLB_H */
