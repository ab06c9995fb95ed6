/*
 * actionpredict — C API for the action-space trajectory prediction toolkit.
 *
 * All functions return ap_status; AP_OK is success. On failure the thread-local
 * message from ap_last_error() describes what went wrong. Handles are opaque
 * and owned by the caller until the matching *_close call.
 */
#ifndef ACTIONPREDICT_H
#define ACTIONPREDICT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ap_status {
  AP_OK = 0,
  AP_ERR_INVALID_ARG = 1,
  AP_ERR_IO = 2,
  AP_ERR_SCHEMA = 3,
  AP_ERR_DATA = 4,
  AP_ERR_CONFIG = 5,
  AP_ERR_DIMENSION = 6,
  AP_ERR_DOMAIN = 7,
  AP_ERR_CONTRACT = 8,
  AP_ERR_NUMERIC = 9,
  AP_ERR_INFEASIBLE = 10,
  AP_ERR_INTERNAL = 11
} ap_status;

const char* ap_version(void);
const char* ap_status_name(ap_status status);
/* message of the most recent failure on this thread; empty string if none */
const char* ap_last_error(void);

/* ---- dataset generation and ingestion ---------------------------------- */

/* scenario: straight | left_turn | right_turn | roundabout_arc | stop_and_go |
 * bimodal_fork. Writes tracks.csv, meta.json, map.json under out_dir. */
ap_status ap_synth_generate(const char* scenario, int count, int recordings, uint64_t seed,
                            int segments, const char* out_dir);

typedef struct ap_ingest_stats {
  uint64_t snippets;
  uint64_t dropped_infeasible;
  uint64_t dropped_inconsistent;
} ap_ingest_stats;

/* Builds a snippet cache from a drone-dataset track table. map_json may be
 * NULL. stats may be NULL. */
ap_status ap_ingest(const char* tracks_csv, const char* meta_json, const char* map_json,
                    double dt, size_t horizon, int segments, double spacing,
                    const char* out_cache, ap_ingest_stats* stats);

/* ---- training and evaluation ------------------------------------------- */

/* run_config_path: JSON run configuration. cache_path overrides the config's
 * cache entry when non-NULL. seed_override >= 0 replaces the config seed.
 * Writes checkpoints and metrics.jsonl under out_dir. */
ap_status ap_train(const char* run_config_path, const char* cache_path, const char* out_dir,
                   int64_t seed_override);

/* split: train | val | test | all. use_encoded_future != 0 swaps the predicted
 * future features for encoded ones (self-supervised diagnostics). Writes the
 * evaluation report as JSON. */
ap_status ap_evaluate(const char* checkpoint, const char* cache_path, const char* split,
                      int segments, int use_encoded_future, const char* out_report_json);

/* Finite-difference gradient verification of every primitive, the kinematics
 * layer, and the end-to-end loss. Fills max_rel_err (may be NULL) and a
 * per-case text report into report (may be NULL). Returns AP_ERR_NUMERIC if
 * any case exceeds the tolerance. */
ap_status ap_gradcheck(uint64_t seed, double tolerance, double* max_rel_err, char* report,
                       size_t report_capacity);

/* ---- handles ------------------------------------------------------------ */

typedef struct ap_model ap_model;
typedef struct ap_dataset ap_dataset;
typedef struct ap_prediction ap_prediction;

ap_status ap_model_open(const char* checkpoint_path, ap_model** out);
void ap_model_close(ap_model* model);
/* hex hash of the model's effective run configuration */
const char* ap_model_config_hash(const ap_model* model);

ap_status ap_dataset_open(const char* cache_path, ap_dataset** out);
void ap_dataset_close(ap_dataset* dataset);
size_t ap_dataset_size(const ap_dataset* dataset);
/* number of snippets in a split (train | val | test | all) */
ap_status ap_dataset_split_count(const ap_dataset* dataset, const char* split, size_t* out);
const char* ap_dataset_fingerprint(const ap_dataset* dataset);

/* Runs inference for one snippet. segments is 1 or 2 (2 needs a two-segment
 * model and cache). */
ap_status ap_predict(const ap_model* model, const ap_dataset* dataset, size_t snippet_index,
                     int segments, ap_prediction** out);
size_t ap_prediction_mode_count(const ap_prediction* pred);
size_t ap_prediction_steps(const ap_prediction* pred);
/* world-frame positions of one mode, interleaved x,y; needs 2*steps doubles */
ap_status ap_prediction_positions(const ap_prediction* pred, size_t mode, double* xy,
                                  size_t capacity);
/* mode probabilities; needs mode_count doubles */
ap_status ap_prediction_probs(const ap_prediction* pred, double* probs, size_t capacity);
void ap_prediction_close(ap_prediction* pred);

/* ---- plotting and debug exports ----------------------------------------- */

/* SVG scene plot: map, ground truth, predicted modes. */
ap_status ap_plot(const ap_model* model, const ap_dataset* dataset, size_t snippet_index,
                  int segments, const char* out_svg);

/* Debug raster export. variant: chauffeurnet (one PNG per channel) or mtp
 * (single RGB PNG). Files are written as path_prefix_ch<N>.png / path_prefix.png. */
ap_status ap_export_raster(const ap_dataset* dataset, size_t snippet_index,
                           const char* variant, const char* path_prefix);

#ifdef __cplusplus
}
#endif

#endif /* ACTIONPREDICT_H */
