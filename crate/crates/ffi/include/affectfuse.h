#ifndef AFFECTFUSE_H
#define AFFECTFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of emotion classes; probability buffers must hold this many values.
 */
#define AF_N_CLASSES 8

typedef enum AfStatus {
  AF_STATUS_OK = 0,
  AF_STATUS_NULL_ARGUMENT = 1,
  AF_STATUS_INVALID_UTF8 = 2,
  AF_STATUS_INVALID_CONFIG = 3,
  AF_STATUS_LOAD_FAILED = 4,
  AF_STATUS_INVALID_AUDIO = 5,
  AF_STATUS_CLIP_TOO_SHORT = 6,
  AF_STATUS_NO_INPUT = 7,
  AF_STATUS_TRANSCRIPTION_UNAVAILABLE = 8,
  AF_STATUS_PREDICT_FAILED = 9,
  AF_STATUS_OUT_OF_RANGE = 10,
  AF_STATUS_PANIC = 11,
} AfStatus;

/**
 * Loaded inference pipeline. Immutable after load, so one handle may be
 * shared by several threads.
 */
typedef struct AfPipeline AfPipeline;

/**
 * Result of one prediction.
 */
typedef struct AfPrediction AfPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *af_last_error(void);

/**
 * Canonical class name for `index`, or null when out of range. Static storage.
 */
const char *af_label_name(uint32_t index);

uint32_t af_n_classes(void);

/**
 * Loads configuration from `config_path` (null for defaults) plus
 * `AFFECTFUSE_` environment overrides, then the model artifacts it names.
 *
 * # Safety
 * `config_path` is null or a valid C string; `out` is a valid pointer.
 */
enum AfStatus af_pipeline_load(const char *config_path, struct AfPipeline **out);

/**
 * # Safety
 * `p` is null or a handle from [`af_pipeline_load`] not yet freed.
 */
void af_pipeline_free(struct AfPipeline *p);

/**
 * Predicts from mono PCM samples in [-1, 1] at `sample_rate` Hz, with an
 * optional transcript. `samples` may be null only when `n_samples` is 0,
 * in which case `transcript` is required.
 *
 * # Safety
 * `p` is a live handle; `samples` points to `n_samples` floats; `transcript`
 * and `clip_id` are null or valid C strings; `out` is a valid pointer.
 */
enum AfStatus af_predict_pcm(const struct AfPipeline *p,
                             const float *samples,
                             size_t n_samples,
                             uint32_t sample_rate,
                             const char *transcript,
                             const char *clip_id,
                             struct AfPrediction **out);

/**
 * Predicts from an in-memory WAV file.
 *
 * # Safety
 * As [`af_predict_pcm`], with `wav` pointing to `wav_len` bytes.
 */
enum AfStatus af_predict_wav(const struct AfPipeline *p,
                             const uint8_t *wav,
                             size_t wav_len,
                             const char *transcript,
                             const char *clip_id,
                             struct AfPrediction **out);

/**
 * Index of the decided class.
 *
 * # Safety
 * `pred` is a live prediction handle.
 */
uint32_t af_prediction_label(const struct AfPrediction *pred);

/**
 * Copies the fused distribution, in canonical class order, into `probs`,
 * which must hold `len >= AF_N_CLASSES` values.
 *
 * # Safety
 * `pred` is a live prediction handle; `probs` points to `len` doubles.
 */
enum AfStatus af_prediction_probs(const struct AfPrediction *pred, double *probs, size_t len);

/**
 * Full response as a JSON object; valid while `pred` lives.
 *
 * # Safety
 * `pred` is a live prediction handle.
 */
const char *af_prediction_json(const struct AfPrediction *pred);

/**
 * # Safety
 * `pred` is null or a handle not yet freed.
 */
void af_prediction_free(struct AfPrediction *pred);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFFECTFUSE_H */
