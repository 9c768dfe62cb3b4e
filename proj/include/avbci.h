/* avbci — neuronal-avalanche biomarkers for BCI training analysis.
 *
 * C interface to the analysis pipeline. Handles are opaque; every function
 * that can fail returns an avbci_status, and avbci_last_error() describes
 * the most recent failure on the calling thread. Stage options are JSON
 * strings documented in the README; artifacts are written as CSV/JSON files.
 */
#ifndef AVBCI_H
#define AVBCI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum avbci_status {
  AVBCI_OK = 0,
  AVBCI_ERR_VALIDATION = 2, /* bad input, config, or dataset */
  AVBCI_ERR_UPSTREAM = 3,   /* required upstream artifact missing */
  AVBCI_ERR_NUMERIC = 4     /* numerical failure */
} avbci_status;

typedef struct avbci_dataset avbci_dataset;
typedef struct avbci_features avbci_features;

/* Library version string, static storage. */
const char* avbci_version(void);

/* Message for the last error on this thread; never NULL. */
const char* avbci_last_error(void);

/* Generates a synthetic dataset (config is a JSON object; "{}" for the
 * defaults) into out_dir: manifest.json, trial CSVs, ground_truth.json. */
avbci_status avbci_simulate(const char* config_json, const char* out_dir);

/* Loads and validates a dataset from its manifest.json. */
avbci_status avbci_dataset_open(const char* manifest_path, avbci_dataset** out);
void avbci_dataset_close(avbci_dataset* dataset);

int32_t avbci_dataset_n_subjects(const avbci_dataset* dataset);
int32_t avbci_dataset_n_sessions(const avbci_dataset* dataset);
int32_t avbci_dataset_n_rois(const avbci_dataset* dataset);
double avbci_dataset_sampling_rate(const avbci_dataset* dataset);

/* Avalanche feature extraction.
 * options JSON: {"grid": "canonical" | [{"k":int, "min_dur_samples":int}...],
 *                "grid_file": path, "excursion": "abs"|"positive",
 *                "filter": "all"|"hit"|"miss", "rois": "all"|path-to-selection.json}
 */
avbci_status avbci_features_compute(const avbci_dataset* dataset, const char* options_json,
                                    avbci_features** out);
/* Writes features.csv, roi_profiles.csv and provenance.json. */
avbci_status avbci_features_write(const avbci_features* features, const char* out_dir);
/* Reopens a directory written by avbci_features_write. */
avbci_status avbci_features_open(const char* dir, avbci_features** out);
void avbci_features_close(avbci_features* features);
int64_t avbci_features_n_rows(const avbci_features* features);

/* Statistical battery -> stats.json at out_path.
 * options JSON: {"filter": "all"|"hit"|"miss", "permutations": int,
 *                "seed": int, "perm_scheme": "free"|"within-subject"} */
avbci_status avbci_stats_run(const avbci_dataset* dataset, const avbci_features* features,
                             const char* options_json, const char* out_path);

/* Repeated-measures correlations -> rmcorr.json at out_path. */
avbci_status avbci_rmcorr_run(const avbci_dataset* dataset, const avbci_features* features,
                              const char* out_path);

/* ROI selection -> selection.json at out_path.
 * options JSON: {"alpha": double} */
avbci_status avbci_roi_select_run(const avbci_dataset* dataset, const avbci_features* features,
                                  const char* options_json, const char* out_path);

/* Next-session prediction -> predictions.json at out_path.
 * options JSON: {"model": "lsvr"|"lsvc"|"svr"|"svc", "control": "none"|"shuffle",
 *                "chance": double, "seed": int,
 *                "couple": {"k":int, "min_dur_samples":int}} */
avbci_status avbci_predict_run(const avbci_dataset* dataset, const avbci_features* features,
                               const char* options_json, const char* out_path);

/* Report generation: summary.txt, effect tables, trend tables and density
 * grids from the artifacts found in artifact_dir. */
avbci_status avbci_report_run(const char* artifact_dir, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* AVBCI_H */
