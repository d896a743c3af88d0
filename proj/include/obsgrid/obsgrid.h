/*
 * Copyright 2026 The obsgrid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the obsgrid library. Every function returning
 * obsgrid_status leaves a message for obsgrid_last_error() on failure.
 * Strings returned through char** must be released with obsgrid_string_free. */

#ifndef OBSGRID_OBSGRID_H
#define OBSGRID_OBSGRID_H

#include <stddef.h>
#include <stdint.h>

#if defined(OBSGRID_BUILDING_LIBRARY)
#define OBSGRID_API __attribute__((visibility("default")))
#else
#define OBSGRID_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum obsgrid_status {
  OBSGRID_OK = 0,
  OBSGRID_ERR_CONFIG = 1,
  OBSGRID_ERR_DATA = 2,
  OBSGRID_ERR_IO = 3,
  OBSGRID_ERR_UNSUPPORTED = 4,
  OBSGRID_ERR_DEGENERATE = 5,
  OBSGRID_ERR_INVALID_ARGUMENT = 6,
  OBSGRID_ERR_INTERNAL = 7
} obsgrid_status;

typedef struct obsgrid_database obsgrid_database;
typedef struct obsgrid_store obsgrid_store;

/* Message of the last failure on the calling thread ("" if none). */
OBSGRID_API const char* obsgrid_last_error(void);
OBSGRID_API const char* obsgrid_version(void);
OBSGRID_API const char* obsgrid_status_name(obsgrid_status status);
OBSGRID_API void obsgrid_string_free(char* text);

/* Databases */
OBSGRID_API obsgrid_status obsgrid_simulate_file(const char* config_path, obsgrid_database** out);
OBSGRID_API obsgrid_status obsgrid_simulate_json(const char* config_json, obsgrid_database** out);
OBSGRID_API obsgrid_status obsgrid_database_load(const char* dir, obsgrid_database** out);
OBSGRID_API obsgrid_status obsgrid_database_write(const obsgrid_database* db, const char* dir);
OBSGRID_API obsgrid_status obsgrid_database_counts(const obsgrid_database* db, size_t* persons,
                                                   size_t* observation_periods,
                                                   size_t* drug_exposures,
                                                   size_t* condition_occurrences);
OBSGRID_API void obsgrid_database_free(obsgrid_database* db);

/* Grid runs. Zero-valued options keep the config file's value. */
typedef struct obsgrid_run_options {
  int workers;
  int ps_strata;
} obsgrid_run_options;

OBSGRID_API obsgrid_status obsgrid_run_file(const char* config_path, const char* out_dir,
                                            const obsgrid_run_options* options);
/* Relative paths in the config resolve against base_dir (may be NULL). */
OBSGRID_API obsgrid_status obsgrid_run_json(const char* config_json, const char* base_dir,
                                            const char* out_dir, const obsgrid_run_options* options);

/* Result stores */
typedef struct obsgrid_record {
  const char* database;
  const char* analysis;
  int64_t target;
  int64_t comparator;
  int64_t outcome;
  int is_control;
  double true_hr; /* NaN when unknown */
  size_t target_subjects;
  size_t comparator_subjects;
  size_t target_events;
  size_t comparator_events;
  int estimable;
  double log_hr;
  double se;
  double hr;
  double ci_lb;
  double ci_ub;
  double p;
  int calibrated;
  double cal_ci_lb;
  double cal_ci_ub;
  double cal_p;
  double max_smd_after;
  double equipoise_share;
  const char* suppressed_reason; /* NULL when estimated */
} obsgrid_record;

OBSGRID_API obsgrid_status obsgrid_store_load(const char* dir, obsgrid_store** out);
OBSGRID_API size_t obsgrid_store_size(const obsgrid_store* store);
/* Pointers in *out stay valid until the store is freed. */
OBSGRID_API obsgrid_status obsgrid_store_get(const obsgrid_store* store, size_t index,
                                             obsgrid_record* out);
OBSGRID_API void obsgrid_store_free(obsgrid_store* store);

/* Reports and diagnostics; summaries are JSON text. out_dir NULL means the store directory. */
OBSGRID_API obsgrid_status obsgrid_report(const char* store_dir, const char* out_dir, char** summary);
OBSGRID_API obsgrid_status obsgrid_loo_cv(const char* store_dir, const char* out_dir, char** summary);
OBSGRID_API obsgrid_status obsgrid_transitivity(const obsgrid_store* store, const char* database,
                                                const char* analysis, double alpha,
                                                size_t* qualifying, size_t* holding);

/* Numerical helpers */
OBSGRID_API obsgrid_status obsgrid_compute_i2(const double* log_hr, const double* se, size_t k,
                                              double* q, double* i2);
OBSGRID_API obsgrid_status obsgrid_calibrate_ci(double log_hr, double se, double a, double b,
                                                double c, double d, double alpha, double* lb,
                                                double* ub);

#ifdef __cplusplus
}
#endif

#endif /* OBSGRID_OBSGRID_H */
