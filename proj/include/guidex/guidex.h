/*
 * Copyright 2026 The guidex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GUIDEX_GUIDEX_H_
#define GUIDEX_GUIDEX_H_

/*
 * C interface to the guidex anomaly-detection pipeline.
 *
 * Handles are opaque and owned by the caller; release them with the
 * matching *_free function. Every fallible call returns a gx_status; on
 * failure gx_last_error() describes the problem (thread-local, valid until
 * the next call on the same thread). Strings returned through char** are
 * heap-allocated and must be released with gx_string_free.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GX_API __declspec(dllexport)
#else
#define GX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gx_status {
  GX_OK = 0,
  GX_ERR_VALIDATION = 1, /* bad config, argument or value */
  GX_ERR_STAGE = 2,      /* prerequisite stage missing or wrong stage */
  GX_ERR_DATA = 3,       /* missing or corrupt files */
  GX_ERR_NUMERICAL = 4,  /* non-finite or diverging values */
  GX_ERR_RUNTIME = 5     /* anything else */
} gx_status;

typedef struct gx_config gx_config;
typedef struct gx_dataset gx_dataset;

GX_API const char* gx_version(void);
GX_API const char* gx_last_error(void);
GX_API const char* gx_status_name(gx_status status);
GX_API void gx_string_free(char* s);

/* 0 = quiet, 1 = warnings, 2 = info. Logs go to stderr. */
GX_API void gx_set_log_level(int level);
GX_API size_t gx_warning_count(void);

/* Configuration: built-in defaults, then files, then key=value overrides. */
GX_API gx_status gx_config_new(gx_config** out);
GX_API void gx_config_free(gx_config* cfg);
GX_API gx_status gx_config_load_file(gx_config* cfg, const char* path);
GX_API gx_status gx_config_set(gx_config* cfg, const char* assignment);
/* Resolved config with per-key sources, as JSON. */
GX_API gx_status gx_config_to_json(const gx_config* cfg, char** out_json);
GX_API gx_status gx_config_to_toml(const gx_config* cfg, char** out_toml);
/* Typed lookups; GX_ERR_VALIDATION for unknown keys or wrong types. */
GX_API gx_status gx_config_get_string(const gx_config* cfg, const char* key, char** out_value);
GX_API gx_status gx_config_get_int(const gx_config* cfg, const char* key, int64_t* out_value);

/* Synthetic world. gx_generate_world writes `dir` and, if out is non-null,
 * returns the loaded dataset. */
GX_API gx_status gx_generate_world(const gx_config* cfg, const char* dir, gx_dataset** out);
GX_API gx_status gx_dataset_open(const char* dir, gx_dataset** out);
GX_API void gx_dataset_free(gx_dataset* ds);
GX_API gx_status gx_dataset_hash(const gx_dataset* ds, char** out_hex);
/* Counts of videos, events and frames per split, as JSON. */
GX_API gx_status gx_dataset_info(const gx_dataset* ds, char** out_json);

/* Training. `stage` is "flow", "joint" or "final"; each stage reads its
 * prerequisite from `run_dir` and writes run_dir/<stage>/. The report holds
 * per-epoch losses and stage-specific extras. */
GX_API gx_status gx_train_stage(const gx_config* cfg, const gx_dataset* ds, const char* run_dir, const char* stage,
                                char** out_report_json);

/* Scores every window of `split` with the final-stage model and writes a
 * clip CSV (video_id, person, start, s_mo, s_app, s_mm). Stride comes from
 * score.stride for the test split and train.stride for the train split. */
GX_API gx_status gx_score_split(const gx_config* cfg, const gx_dataset* ds, const char* run_dir, const char* split,
                                const char* csv_path);

/* Combines, normalizes and evaluates test clip scores. reference_csv holds
 * train-split scores (used by score.lambda_mode = "calibrated"; may be null
 * otherwise). Writes summary.json, csv/ and plots/ under report_dir. */
GX_API gx_status gx_evaluate(const gx_config* cfg, const gx_dataset* ds, const char* test_csv,
                             const char* reference_csv, const char* report_dir, char** out_summary_json);

/* Writes run_manifest.json and resolved_config.toml into `dir`. */
GX_API gx_status gx_write_manifest(const gx_config* cfg, const char* dir, const char* command,
                                   const char* const* inputs, size_t n_inputs);

/* Verification suites. *out_passed is set to 1 when everything passed. */
GX_API gx_status gx_grad_check(const char* selector, double tolerance, uint64_t seed, char** out_report_json,
                               int* out_passed);
GX_API gx_status gx_selftest(uint64_t seed, char** out_report_json, int* out_passed);

#ifdef __cplusplus
}
#endif

#endif /* GUIDEX_GUIDEX_H_ */
