#ifndef AUTOPHAGY_H
#define AUTOPHAGY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AutophagyStatus {
  AUTOPHAGY_STATUS_OK = 0,
  AUTOPHAGY_STATUS_NULL_POINTER = 1,
  AUTOPHAGY_STATUS_INVALID_ARGUMENT = 2,
  AUTOPHAGY_STATUS_INVALID_UTF8 = 3,
  AUTOPHAGY_STATUS_IO = 4,
  AUTOPHAGY_STATUS_MODEL = 5,
  AUTOPHAGY_STATUS_BUFFER_TOO_SMALL = 6,
  AUTOPHAGY_STATUS_PANIC = 7,
} AutophagyStatus;

typedef struct AutophagyModel AutophagyModel;

typedef struct AutophagyVocab AutophagyVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *autophagy_last_error(void);

/**
 * Static version string.
 */
const char *autophagy_version(void);

/**
 * Gini coefficient of `q[0..n]`.
 *
 * # Safety
 * `q` must point to `n` doubles and `out` must be writable.
 */
enum AutophagyStatus autophagy_gini(const double *q, size_t n, double *out);

/**
 * True when some entry of `q[0..n]` strictly exceeds `tau`.
 *
 * # Safety
 * `q` must point to `n` doubles and `out` must be writable.
 */
enum AutophagyStatus autophagy_collapsed(const double *q, size_t n, double tau, bool *out);

/**
 * Normalized entropy of the token frequencies in `tokens[0..n]`.
 *
 * # Safety
 * `tokens` must point to `n` ids and `out` must be writable.
 */
enum AutophagyStatus autophagy_entropy(const uint32_t *tokens, size_t n, double *out);

/**
 * Builds a vocabulary from `n` NUL-terminated texts.
 *
 * # Safety
 * `texts` must point to `n` valid strings; `out` must be writable.
 */
enum AutophagyStatus autophagy_vocab_build(const char *const *texts,
                                           size_t n,
                                           uint64_t min_count,
                                           struct AutophagyVocab **out);

/**
 * # Safety
 * `vocab` must be null or a handle from this library not yet freed.
 */
void autophagy_vocab_free(struct AutophagyVocab *vocab);

/**
 * Number of ids, reserved ones included. 0 for a null handle.
 *
 * # Safety
 * `vocab` must be null or a live handle.
 */
size_t autophagy_vocab_len(const struct AutophagyVocab *vocab);

/**
 * Token ids of `text`. Returns `BUFFER_TOO_SMALL` with the needed length
 * in `written` when `cap` is short.
 *
 * # Safety
 * `vocab` must be live, `text` a valid string, `out` room for `cap` ids.
 */
enum AutophagyStatus autophagy_vocab_tokenize(const struct AutophagyVocab *vocab,
                                              const char *text,
                                              uint32_t *out,
                                              size_t cap,
                                              size_t *written);

/**
 * Untrained reference model over `vocab` (the handle is not consumed).
 *
 * # Safety
 * `vocab` must be live and `out` writable.
 */
enum AutophagyStatus autophagy_model_new(const struct AutophagyVocab *vocab,
                                         size_t order,
                                         double alpha,
                                         double backoff_lambda,
                                         struct AutophagyModel **out);

/**
 * Loads a JSON snapshot.
 *
 * # Safety
 * `path` must be a valid string and `out` writable.
 */
enum AutophagyStatus autophagy_model_load(const char *path, struct AutophagyModel **out);

/**
 * # Safety
 * `model` must be live and `path` a valid string.
 */
enum AutophagyStatus autophagy_model_save(const struct AutophagyModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
void autophagy_model_free(struct AutophagyModel *model);

/**
 * Adds `n_docs` documents laid end to end in `tokens`, the i-th of
 * length `lengths[i]`, with count weight `weight`.
 *
 * # Safety
 * `model` must be live; `lengths` must hold `n_docs` values and `tokens`
 * their sum.
 */
enum AutophagyStatus autophagy_model_fine_tune(struct AutophagyModel *model,
                                               const uint32_t *tokens,
                                               const size_t *lengths,
                                               size_t n_docs,
                                               double weight);

/**
 * The `n` most likely next tokens after `context`, descending, written to
 * `ids` and `probs` (both `cap` long).
 *
 * # Safety
 * `model` must be live; `context` must hold `context_len` ids; `ids` and
 * `probs` must have room for `cap` values.
 */
enum AutophagyStatus autophagy_model_top_n(const struct AutophagyModel *model,
                                           const uint32_t *context,
                                           size_t context_len,
                                           size_t n,
                                           uint32_t *ids,
                                           double *probs,
                                           size_t cap,
                                           size_t *written);

/**
 * Surplexity of `tokens[0..n]`.
 *
 * # Safety
 * `model` must be live, `tokens` hold `n` ids, `out` writable.
 */
enum AutophagyStatus autophagy_model_surplexity(const struct AutophagyModel *model,
                                                const uint32_t *tokens,
                                                size_t n,
                                                double *out);

/**
 * Samples up to `max_new` tokens after `prompt`. A `temperature` of 0
 * selects greedy decoding.
 *
 * # Safety
 * `model` must be live, `prompt` hold `prompt_len` ids, `out` room for
 * `cap` ids.
 */
enum AutophagyStatus autophagy_model_generate(const struct AutophagyModel *model,
                                              const uint32_t *prompt,
                                              size_t prompt_len,
                                              size_t max_new,
                                              double temperature,
                                              size_t top_k,
                                              uint64_t seed,
                                              uint32_t *out,
                                              size_t cap,
                                              size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOPHAGY_H */
