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

#include "obsgrid/obsgrid.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <limits>
#include <new>
#include <string>

#include "json.hpp"
#include "obsgrid/config.hpp"
#include "obsgrid/database.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/grid.hpp"
#include "obsgrid/heterogeneity.hpp"
#include "obsgrid/reports.hpp"
#include "obsgrid/store.hpp"
#include "obsgrid/synth.hpp"

struct obsgrid_database {
  obsgrid::PatientDatabase db;
};

struct obsgrid_store {
  obsgrid::ResultStore store;
  std::vector<const obsgrid::ResultRecord*> records;
};

namespace {

thread_local std::string g_last_error;

obsgrid_status fail(obsgrid_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

/// Runs fn, translating library exceptions into status codes.
template <typename Fn>
obsgrid_status guarded(Fn fn) {
  try {
    g_last_error.clear();
    fn();
    return OBSGRID_OK;
  } catch (const obsgrid::CvDegenerateError& e) {
    return fail(OBSGRID_ERR_DEGENERATE, e.what());
  } catch (const obsgrid::DegenerateFitError& e) {
    return fail(OBSGRID_ERR_DEGENERATE, e.what());
  } catch (const obsgrid::ConfigError& e) {
    return fail(OBSGRID_ERR_CONFIG, e.what());
  } catch (const obsgrid::DataError& e) {
    return fail(OBSGRID_ERR_DATA, e.what());
  } catch (const obsgrid::IoError& e) {
    return fail(OBSGRID_ERR_IO, e.what());
  } catch (const obsgrid::UnsupportedError& e) {
    return fail(OBSGRID_ERR_UNSUPPORTED, e.what());
  } catch (const obsgrid::Error& e) {
    return fail(OBSGRID_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(OBSGRID_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(OBSGRID_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(OBSGRID_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void run_config(obsgrid::RunConfig config, const char* out_dir, const obsgrid_run_options* options) {
  if (options) {
    if (options->workers < 0 || options->ps_strata < 0)
      throw obsgrid::ConfigError("run options must be non-negative");
    if (options->workers > 0) config.workers = static_cast<std::size_t>(options->workers);
    if (options->ps_strata > 0) config.ps.n_strata = options->ps_strata;
  }
  config.validate();
  const auto result = obsgrid::run_grid(config);
  obsgrid::write_grid_result(result, out_dir);
}

}  // namespace

#define REQUIRE_ARG(cond, what) \
  if (!(cond)) return fail(OBSGRID_ERR_INVALID_ARGUMENT, what)

extern "C" {

const char* obsgrid_last_error(void) { return g_last_error.c_str(); }

const char* obsgrid_version(void) { return OBSGRID_VERSION_STRING; }

const char* obsgrid_status_name(obsgrid_status status) {
  switch (status) {
    case OBSGRID_OK: return "ok";
    case OBSGRID_ERR_CONFIG: return "configuration error";
    case OBSGRID_ERR_DATA: return "data error";
    case OBSGRID_ERR_IO: return "I/O error";
    case OBSGRID_ERR_UNSUPPORTED: return "unsupported operation";
    case OBSGRID_ERR_DEGENERATE: return "degenerate fit";
    case OBSGRID_ERR_INVALID_ARGUMENT: return "invalid argument";
    case OBSGRID_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void obsgrid_string_free(char* text) { std::free(text); }

obsgrid_status obsgrid_simulate_file(const char* config_path, obsgrid_database** out) {
  REQUIRE_ARG(config_path && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto db = obsgrid::generate_database(obsgrid::load_sim_config(config_path));
    *out = new obsgrid_database{std::move(db)};
  });
}

obsgrid_status obsgrid_simulate_json(const char* config_json, obsgrid_database** out) {
  REQUIRE_ARG(config_json && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto db = obsgrid::generate_database(obsgrid::parse_sim_config(config_json));
    *out = new obsgrid_database{std::move(db)};
  });
}

obsgrid_status obsgrid_database_load(const char* dir, obsgrid_database** out) {
  REQUIRE_ARG(dir && out, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new obsgrid_database{obsgrid::read_database(dir)}; });
}

obsgrid_status obsgrid_database_write(const obsgrid_database* db, const char* dir) {
  REQUIRE_ARG(db && dir, "null argument");
  return guarded([&] { obsgrid::write_database(db->db, dir); });
}

obsgrid_status obsgrid_database_counts(const obsgrid_database* db, size_t* persons,
                                       size_t* observation_periods, size_t* drug_exposures,
                                       size_t* condition_occurrences) {
  REQUIRE_ARG(db, "null database");
  if (persons) *persons = db->db.person_count();
  if (observation_periods) *observation_periods = db->db.observation_periods().size();
  if (drug_exposures) *drug_exposures = db->db.drug_exposures().size();
  if (condition_occurrences) *condition_occurrences = db->db.condition_occurrences().size();
  return OBSGRID_OK;
}

void obsgrid_database_free(obsgrid_database* db) { delete db; }

obsgrid_status obsgrid_run_file(const char* config_path, const char* out_dir,
                                const obsgrid_run_options* options) {
  REQUIRE_ARG(config_path && out_dir, "null argument");
  return guarded([&] { run_config(obsgrid::load_run_config(config_path), out_dir, options); });
}

obsgrid_status obsgrid_run_json(const char* config_json, const char* base_dir, const char* out_dir,
                                const obsgrid_run_options* options) {
  REQUIRE_ARG(config_json && out_dir, "null argument");
  return guarded([&] {
    run_config(obsgrid::parse_run_config(config_json, base_dir ? base_dir : ""), out_dir, options);
  });
}

obsgrid_status obsgrid_store_load(const char* dir, obsgrid_store** out) {
  REQUIRE_ARG(dir && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto* s = new obsgrid_store{obsgrid::read_store(dir), {}};
    s->records = s->store.records();
    *out = s;
  });
}

size_t obsgrid_store_size(const obsgrid_store* store) { return store ? store->records.size() : 0; }

obsgrid_status obsgrid_store_get(const obsgrid_store* store, size_t index, obsgrid_record* out) {
  REQUIRE_ARG(store && out, "null argument");
  REQUIRE_ARG(index < store->records.size(), "record index out of range");
  const auto& r = *store->records[index];
  const auto& e = r.estimate;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out->database = r.key.database.c_str();
  out->analysis = r.key.analysis.c_str();
  out->target = r.key.target;
  out->comparator = r.key.comparator;
  out->outcome = r.key.outcome;
  out->is_control = r.is_control ? 1 : 0;
  out->true_hr = r.true_hr;
  out->target_subjects = e.counts.target_subjects;
  out->comparator_subjects = e.counts.comparator_subjects;
  out->target_events = e.counts.target_events;
  out->comparator_events = e.counts.comparator_events;
  out->estimable = e.estimable ? 1 : 0;
  out->log_hr = e.estimable ? e.log_hr : nan;
  out->se = e.estimable ? e.se_log_hr : nan;
  out->hr = e.estimable ? e.hr : nan;
  out->ci_lb = e.estimable ? e.ci95.first : nan;
  out->ci_ub = e.estimable ? e.ci95.second : nan;
  out->p = e.estimable ? e.p : nan;
  out->calibrated = e.calibrated_ci95 ? 1 : 0;
  out->cal_ci_lb = e.calibrated_ci95 ? e.calibrated_ci95->first : nan;
  out->cal_ci_ub = e.calibrated_ci95 ? e.calibrated_ci95->second : nan;
  out->cal_p = e.calibrated_p.value_or(nan);
  out->max_smd_after = r.max_smd_after;
  out->equipoise_share = r.equipoise_share;
  out->suppressed_reason = e.suppressed_reason ? e.suppressed_reason->c_str() : nullptr;
  return OBSGRID_OK;
}

void obsgrid_store_free(obsgrid_store* store) { delete store; }

obsgrid_status obsgrid_report(const char* store_dir, const char* out_dir, char** summary) {
  REQUIRE_ARG(store_dir, "null store directory");
  if (summary) *summary = nullptr;
  return guarded([&] {
    const auto store = obsgrid::read_store(store_dir);
    const auto s = obsgrid::emit_reports(store, out_dir ? out_dir : store_dir);
    if (summary) *summary = dup_string(s.to_json());
  });
}

obsgrid_status obsgrid_loo_cv(const char* store_dir, const char* out_dir, char** summary) {
  REQUIRE_ARG(store_dir, "null store directory");
  if (summary) *summary = nullptr;
  return guarded([&] {
    const auto store = obsgrid::read_store(store_dir);
    const auto levels = obsgrid::default_coverage_levels();
    const auto curves = obsgrid::loo_coverage(store, levels);
    const std::filesystem::path dir = out_dir ? out_dir : store_dir;
    std::filesystem::create_directories(dir);
    obsgrid::write_coverage_curves(curves, dir / obsgrid::report_files::kCoverageCurve);
    if (!summary) return;
    // Coverage at the 95% level per context.
    std::size_t level95 = 0;
    for (std::size_t l = 0; l < levels.size(); ++l)
      if (std::abs(levels[l] - 0.95) < 1e-12) level95 = l;
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& c : curves) {
      nlohmann::ordered_json row;
      row["database"] = c.context.database;
      row["analysis"] = c.context.analysis;
      row["target"] = c.context.target;
      row["comparator"] = c.context.comparator;
      row["controls"] = c.curve.evaluated_controls;
      row["model_fits"] = c.curve.model_fits;
      row["unavailable_folds"] = c.curve.unavailable_folds;
      const double cov = c.curve.pooled[level95];
      row["coverage_95"] = std::isfinite(cov) ? nlohmann::ordered_json(cov) : nlohmann::ordered_json(nullptr);
      j.push_back(row);
    }
    *summary = dup_string(j.dump(2));
  });
}

obsgrid_status obsgrid_transitivity(const obsgrid_store* store, const char* database,
                                    const char* analysis, double alpha, size_t* qualifying,
                                    size_t* holding) {
  REQUIRE_ARG(store && database && analysis && qualifying && holding, "null argument");
  return guarded([&] {
    const auto t = obsgrid::transitivity_audit(store->store, database, analysis, alpha);
    *qualifying = t.qualifying;
    *holding = t.holding;
  });
}

obsgrid_status obsgrid_compute_i2(const double* log_hr, const double* se, size_t k, double* q,
                                  double* i2) {
  REQUIRE_ARG((log_hr && se) || k == 0, "null estimate arrays");
  REQUIRE_ARG(q && i2, "null output");
  return guarded([&] {
    std::vector<std::pair<double, double>> est;
    for (size_t i = 0; i < k; ++i) est.emplace_back(log_hr[i], se[i]);
    const auto r = obsgrid::compute_i2(est);
    if (!r) throw obsgrid::UnsupportedError("heterogeneity needs at least 2 estimates");
    *q = r->q;
    *i2 = r->i2;
  });
}

obsgrid_status obsgrid_calibrate_ci(double log_hr, double se, double a, double b, double c, double d,
                                    double alpha, double* lb, double* ub) {
  REQUIRE_ARG(lb && ub, "null output");
  return guarded([&] {
    obsgrid::SystematicErrorModel m{a, b, c, d};
    const auto ci = obsgrid::calibrate_ci(log_hr, se, m, alpha);
    if (!ci.ci) throw obsgrid::DegenerateFitError("uncalibratable: " + ci.failure.value_or(""));
    *lb = ci.ci->first;
    *ub = ci.ci->second;
  });
}

}  // extern "C"
