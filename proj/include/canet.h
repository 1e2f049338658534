/* canet: few-shot segmentation core, C interface.
 *
 * Every function that can fail returns a canet_status; CANET_OK is zero.
 * On failure, canet_last_error() returns a thread-local message describing
 * the most recent error on the calling thread (valid until the next failing
 * call on that thread). Handles are opaque and must be released with the
 * matching _destroy function; destroy functions accept NULL.
 */
#ifndef CANET_H
#define CANET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum canet_status {
    CANET_OK = 0,
    CANET_ERROR_CONFIG = 10,
    CANET_ERROR_IO = 11,
    CANET_ERROR_CHECKPOINT = 12,
    CANET_ERROR_EMPTY_FOREGROUND = 13,
    CANET_ERROR_SHAPE = 14,
    CANET_ERROR_STATE = 15,
    CANET_ERROR_GENERATION = 16,
    CANET_ERROR_INVALID_ARGUMENT = 17,
    CANET_ERROR_INTERNAL = 18,
    CANET_ERROR_EMPTY_SUPPORT = 19
} canet_status;

typedef struct canet_config canet_config;
typedef struct canet_model canet_model;
typedef struct canet_report canet_report;

const char* canet_version(void);
const char* canet_status_name(canet_status status);
const char* canet_last_error(void);

/* ---- configuration ----
 * Flat key=value settings with built-in defaults and a closed key set;
 * unknown keys are CANET_ERROR_CONFIG. */
canet_status canet_config_create(canet_config** out);
canet_status canet_config_load(const char* path, canet_config** out);
canet_status canet_config_set(canet_config* cfg, const char* key, const char* value);
canet_status canet_config_get(const canet_config* cfg, const char* key, char* buf, size_t buf_len);
canet_status canet_config_fingerprint(const canet_config* cfg, uint64_t* out);
void canet_config_destroy(canet_config* cfg);

/* ---- dataset generation ----
 * Materializes `count` episodes from the deterministic (seed, phase) stream
 * as PPM/PGM files plus a manifest under out_dir. phase is "train" or
 * "test"; k is the number of support examples per episode. */
canet_status canet_generate_dataset(const canet_config* cfg, const char* phase, int k, long count, uint64_t seed,
                                    const char* out_dir);

/* ---- training ----
 * Runs the full two-stage training loop as configured and writes the final
 * checkpoint to checkpoint_path. loss_csv_path and resume_path may be NULL.
 * The callback (may be NULL) receives per-epoch progress. */
typedef void (*canet_train_callback)(const char* stage, int epoch, int total_epochs, double loss, void* user);
canet_status canet_train(const canet_config* cfg, const char* checkpoint_path, const char* loss_csv_path,
                         const char* resume_path, canet_train_callback callback, void* user);

/* ---- models ---- */
canet_status canet_model_load(const char* checkpoint_path, canet_model** out);
void canet_model_destroy(canet_model* model);

/* Copies the config embedded in the model's checkpoint. */
canet_status canet_model_config(const canet_model* model, canet_config** out);

/* ---- evaluation ----
 * Episode stream, k, fusion, annotation, scales and iteration count come
 * from the eval.* and dataset.* keys of cfg; pass NULL to use the model's
 * embedded config. */
canet_status canet_evaluate(const canet_model* model, const canet_config* cfg, canet_report** out);

canet_status canet_report_mean_iou(const canet_report* report, double* out);
canet_status canet_report_fb_iou(const canet_report* report, double* out);
canet_status canet_report_baseline_mean_iou(const canet_report* report, double* out);
canet_status canet_report_text(const canet_report* report, char* buf, size_t buf_len);
canet_status canet_report_kv(const canet_report* report, char* buf, size_t buf_len);
canet_status canet_report_write(const canet_report* report, const char* path);
void canet_report_destroy(canet_report* report);

/* ---- single-episode prediction ----
 * Samples the episode at `index` of the configured eval stream, runs the
 * model, and writes artifacts into out_dir: query.ppm, query_truth.pgm,
 * support_<i>.ppm, support_<i>_mask.pgm, prediction.pgm, confidence.pgm,
 * and, when dump_iterations is nonzero, iteration_<t>.pgm for each of the
 * T+1 refinement outputs. */
canet_status canet_predict(const canet_model* model, const canet_config* cfg, uint64_t index, const char* out_dir,
                           int dump_iterations);

#ifdef __cplusplus
}
#endif

#endif /* CANET_H */
