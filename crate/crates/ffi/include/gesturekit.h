#ifndef GESTUREKIT_H
#define GESTUREKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_POINTER = 1,
  GK_STATUS_INVALID_ARGUMENT = 2,
  GK_STATUS_IO = 3,
  GK_STATUS_WEIGHT_FILE = 4,
  GK_STATUS_INVALID_FRAME = 5,
  GK_STATUS_BUFFER_TOO_SMALL = 6,
  GK_STATUS_INTERNAL = 99,
} GkStatus;

/**
 * A loaded, immutable model. May be shared across threads.
 */
typedef struct GkModel GkModel;

/**
 * One streaming session. Not thread-safe; use one per thread or lock.
 */
typedef struct GkSession GkSession;

/**
 * Library version as a static NUL-terminated string.
 */
const char *gk_version(void);

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gk_last_error_message(void);

/**
 * Frees a string returned through an out-parameter. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gk_string_free(char *s);

/**
 * Loads a weight file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GkStatus gk_model_load(const char *path, struct GkModel **out);

/**
 * # Safety
 * `model` must come from [`gk_model_load`] and be freed once. Sessions keep
 * their own reference, so they may outlive the model handle.
 */
void gk_model_free(struct GkModel *model);

/**
 * Number of output classes, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t gk_model_class_count(const struct GkModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GkStatus gk_session_new(const struct GkModel *model, struct GkSession **out);

/**
 * # Safety
 * `session` must come from [`gk_session_new`] and be freed once.
 */
void gk_session_free(struct GkSession *session);

/**
 * Zeroes the recurrent state and forgets the previous frame.
 *
 * # Safety
 * `session` must be NULL or a live handle.
 */
void gk_session_reset(struct GkSession *session);

/**
 * Feeds one frame. `joints` holds 21 x/y/z triples (63 doubles); `gaze` is
 * NULL or two doubles. Writes `class_count` probabilities to `probs` and the
 * top class to `top_class` (which may be NULL). On failure the session is
 * unchanged.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum GkStatus gk_session_step(struct GkSession *session,
                              uint64_t t_ms,
                              const double *joints,
                              const double *gaze,
                              double *probs,
                              size_t probs_len,
                              size_t *top_class);

/**
 * Handles one wire-protocol JSON message. `*reply` receives a string to
 * release with [`gk_string_free`], or NULL when the message has no reply
 * (reset). Protocol-level errors are replies, not failures.
 *
 * # Safety
 * `line` must be NUL-terminated; `reply` must be writable.
 */
enum GkStatus gk_session_step_json(struct GkSession *session, const char *line, char **reply);

/**
 * Writes a synthetic corpus as JSONL, same as `gesturekit gen`.
 *
 * # Safety
 * `out_path` must be NUL-terminated.
 */
enum GkStatus gk_generate_dataset(size_t per_class,
                                  size_t frames,
                                  double noise_std,
                                  uint64_t seed,
                                  const char *out_path);

#endif  /* GESTUREKIT_H */
