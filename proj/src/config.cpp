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

#include "obsgrid/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "obsgrid/controls.hpp"
#include "obsgrid/csv.hpp"
#include "obsgrid/errors.hpp"

namespace obsgrid {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be an object");
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& what) {
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + what);
}

/// Reads j[key] into out when present, with a type-checked conversion.
template <typename T>
void read(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("invalid value for '") + key + "'");
  }
}

SimConfig sim_from_json(const json& j) {
  require_object(j, "simulation config");
  reject_unknown(j,
                 {"n_persons", "n_treatments", "n_outcomes", "n_baseline_covariates",
                  "covariate_prevalences", "channeling_strength", "unmeasured_confounder_strength",
                  "true_log_hr", "baseline_hazard_per_day", "mean_treatment_days", "gap_probability",
                  "observation_years", "rng_seed", "outcome_confounding_sd", "switch_probability",
                  "short_washout_fraction", "mean_follow_up_days"},
                 "simulation config");
  for (const char* k : {"n_persons", "n_treatments", "n_outcomes", "n_baseline_covariates"})
    if (j.contains(k) && !(j[k].is_number_unsigned() || (j[k].is_number_integer() && j[k].get<std::int64_t>() >= 0)))
      throw ConfigError(std::string("'") + k + "' must be a non-negative integer");
  SimConfig c;
  read(j, "n_persons", c.n_persons);
  read(j, "n_treatments", c.n_treatments);
  read(j, "n_outcomes", c.n_outcomes);
  read(j, "n_baseline_covariates", c.n_baseline_covariates);
  read(j, "covariate_prevalences", c.covariate_prevalences);
  read(j, "channeling_strength", c.channeling_strength);
  read(j, "unmeasured_confounder_strength", c.unmeasured_confounder_strength);
  read(j, "baseline_hazard_per_day", c.baseline_hazard_per_day);
  read(j, "mean_treatment_days", c.mean_treatment_days);
  read(j, "gap_probability", c.gap_probability);
  read(j, "observation_years", c.observation_years);
  read(j, "rng_seed", c.rng_seed);
  read(j, "outcome_confounding_sd", c.outcome_confounding_sd);
  read(j, "switch_probability", c.switch_probability);
  read(j, "short_washout_fraction", c.short_washout_fraction);
  read(j, "mean_follow_up_days", c.mean_follow_up_days);
  if (const auto it = j.find("true_log_hr"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("'true_log_hr' must be a list");
    for (const auto& e : *it) {
      require_object(e, "true_log_hr entry");
      reject_unknown(e, {"treatment", "outcome", "log_hr"}, "true_log_hr entry");
      if (!e.contains("treatment") || !e.contains("outcome") || !e.contains("log_hr"))
        throw ConfigError("true_log_hr entries need treatment, outcome and log_hr");
      DrugId t = 0;
      ConditionId o = 0;
      double v = 0;
      read(e, "treatment", t);
      read(e, "outcome", o);
      read(e, "log_hr", v);
      if (!c.true_log_hr.emplace(std::pair{t, o}, v).second)
        throw ConfigError("duplicate true_log_hr entry");
    }
  }
  c.validate();
  return c;
}

TimeAtRiskKind tar_kind(const std::string& s) {
  if (s == "on_treatment") return TimeAtRiskKind::on_treatment;
  if (s == "intent_to_treat") return TimeAtRiskKind::intent_to_treat;
  throw ConfigError("unknown time-at-risk kind '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (databases.empty()) throw ConfigError("at least one database is required");
  std::set<std::string> names;
  for (const auto& d : databases) {
    if (d.name.empty()) throw ConfigError("database name must not be empty");
    if (!names.insert(d.name).second) throw ConfigError("duplicate database name " + d.name);
    if (d.simulate.has_value() == d.path.has_value())
      throw ConfigError("database " + d.name + " needs exactly one of simulate or path");
    if (d.simulate) d.simulate->validate();
  }
  if (treatments.size() < 2) throw ConfigError("at least 2 treatments are required");
  if (std::set(treatments.begin(), treatments.end()).size() != treatments.size())
    throw ConfigError("duplicate treatment id");
  if (outcomes.empty()) throw ConfigError("at least 1 outcome is required");
  std::set<ConditionId> all(outcomes.begin(), outcomes.end());
  if (all.size() != outcomes.size()) throw ConfigError("duplicate outcome id");
  for (auto nc : negative_controls) {
    if (!all.insert(nc).second) throw ConfigError("negative control duplicates another outcome id");
    if (nc >= kSyntheticOutcomeBase / 100) throw ConfigError("outcome id too large");
  }
  for (auto o : outcomes)
    if (o >= kSyntheticOutcomeBase) throw ConfigError("outcome id collides with synthetic ids");
  for (double hr : positive_control_hrs)
    if (!(hr > 1.0) || !std::isfinite(hr)) throw ConfigError("positive control HRs must be > 1");
  if (std::set(positive_control_hrs.begin(), positive_control_hrs.end()).size() !=
      positive_control_hrs.size())
    throw ConfigError("duplicate positive control HR");
  if (analyses.empty()) throw ConfigError("at least one analysis is required");
  std::set<std::string> analysis_names;
  for (const auto& a : analyses) {
    if (a.name.empty()) throw ConfigError("analysis name must not be empty");
    if (!analysis_names.insert(a.name).second) throw ConfigError("duplicate analysis name " + a.name);
    a.policy.validate();
  }
  criteria.validate();
  if (lookback_days <= 0) throw ConfigError("lookback_days must be > 0");
  if (ps.n_folds < 2) throw ConfigError("ps.folds must be >= 2");
  if (ps.n_lambdas < 1) throw ConfigError("ps.lambdas must be >= 1");
  if (!(ps.lambda_min_ratio > 0.0 && ps.lambda_min_ratio <= 1.0))
    throw ConfigError("ps.lambda_min_ratio must be in (0, 1]");
  if (ps.n_strata < 1) throw ConfigError("ps.strata must be >= 1");
  if (!(controls.outcome_model_lambda_ratio > 0.0 && controls.outcome_model_lambda_ratio <= 1.0))
    throw ConfigError("controls.outcome_model_lambda_ratio must be in (0, 1]");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

SimConfig parse_sim_config(const std::string& json_text) { return sim_from_json(parse_json(json_text)); }

SimConfig load_sim_config(const std::filesystem::path& file) { return parse_sim_config(read_text(file)); }

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  const json j = parse_json(json_text);
  require_object(j, "run config");
  reject_unknown(j,
                 {"databases", "treatments", "outcomes", "negative_controls", "control_roster",
                  "positive_control_hrs", "analyses", "criteria", "min_arm_size", "covariates", "ps",
                  "calibration", "controls", "rng_seed", "workers", "write_synthetic_outcomes",
                  "emit_ps_artifacts"},
                 "run config");
  RunConfig c;
  if (const auto it = j.find("databases"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("'databases' must be a list");
    for (const auto& d : *it) {
      require_object(d, "database entry");
      reject_unknown(d, {"name", "simulate", "path"}, "database entry");
      DatabaseSpec spec;
      read(d, "name", spec.name);
      if (d.contains("simulate")) spec.simulate = sim_from_json(d["simulate"]);
      if (d.contains("path")) {
        std::string p;
        read(d, "path", p);
        spec.path = base_dir / p;
      }
      c.databases.push_back(std::move(spec));
    }
  }
  read(j, "treatments", c.treatments);
  read(j, "outcomes", c.outcomes);
  read(j, "negative_controls", c.negative_controls);
  read(j, "positive_control_hrs", c.positive_control_hrs);
  if (const auto it = j.find("control_roster"); it != j.end()) {
    std::string p;
    read(j, "control_roster", p);
    for (auto id : read_control_roster(base_dir / p, c.positive_control_hrs))
      c.negative_controls.push_back(id);
  }
  if (const auto it = j.find("analyses"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("'analyses' must be a list");
    for (const auto& a : *it) {
      require_object(a, "analysis entry");
      reject_unknown(a, {"name", "kind", "gap_days"}, "analysis entry");
      AnalysisSpec spec;
      std::string kind = "on_treatment";
      read(a, "name", spec.name);
      read(a, "kind", kind);
      spec.policy.kind = tar_kind(kind);
      read(a, "gap_days", spec.policy.gap_days);
      c.analyses.push_back(std::move(spec));
    }
  } else {
    c.analyses.push_back({"on_treatment", {}});
  }
  if (const auto it = j.find("criteria"); it != j.end()) {
    require_object(*it, "criteria");
    reject_unknown(*it,
                   {"washout_days", "indication_condition", "exclusion_conditions",
                    "exclude_prior_outcome", "exclude_both_exposed", "restrict_calendar_overlap"},
                   "criteria");
    read(*it, "washout_days", c.criteria.washout_days);
    if (it->contains("indication_condition") && !(*it)["indication_condition"].is_null()) {
      ConditionId ind = 0;
      read(*it, "indication_condition", ind);
      c.criteria.indication_condition = ind;
    }
    read(*it, "exclusion_conditions", c.criteria.exclusion_conditions);
    read(*it, "exclude_prior_outcome", c.criteria.exclude_prior_outcome);
    read(*it, "exclude_both_exposed", c.criteria.exclude_both_exposed);
    read(*it, "restrict_calendar_overlap", c.criteria.restrict_calendar_overlap);
  }
  if (j.contains("min_arm_size") && j["min_arm_size"].is_number_integer() &&
      j["min_arm_size"].get<std::int64_t>() < 0)
    throw ConfigError("min_arm_size must be >= 0");
  read(j, "min_arm_size", c.min_arm_size);
  if (const auto it = j.find("covariates"); it != j.end()) {
    require_object(*it, "covariates");
    reject_unknown(*it, {"lookback_days", "min_nonzero"}, "covariates");
    read(*it, "lookback_days", c.lookback_days);
    read(*it, "min_nonzero", c.min_covariate_nonzero);
  }
  if (const auto it = j.find("ps"); it != j.end()) {
    require_object(*it, "ps");
    reject_unknown(*it, {"folds", "lambdas", "lambda_min_ratio", "strata", "max_iterations",
                         "tolerance"},
                   "ps");
    read(*it, "folds", c.ps.n_folds);
    read(*it, "lambdas", c.ps.n_lambdas);
    read(*it, "lambda_min_ratio", c.ps.lambda_min_ratio);
    read(*it, "strata", c.ps.n_strata);
    read(*it, "max_iterations", c.ps.solver.max_iterations);
    read(*it, "tolerance", c.ps.solver.coord_tolerance);
  }
  if (const auto it = j.find("calibration"); it != j.end()) {
    require_object(*it, "calibration");
    reject_unknown(*it, {"minimum_controls"}, "calibration");
    read(*it, "minimum_controls", c.calibration.minimum_controls);
  }
  if (const auto it = j.find("controls"); it != j.end()) {
    require_object(*it, "controls");
    reject_unknown(*it, {"min_model", "min_inject", "outcome_model_lambda_ratio"}, "controls");
    read(*it, "min_model", c.controls.min_model);
    read(*it, "min_inject", c.controls.min_inject);
    read(*it, "outcome_model_lambda_ratio", c.controls.outcome_model_lambda_ratio);
  }
  read(j, "rng_seed", c.rng_seed);
  read(j, "workers", c.workers);
  read(j, "write_synthetic_outcomes", c.write_synthetic_outcomes);
  read(j, "emit_ps_artifacts", c.emit_ps_artifacts);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  return parse_run_config(read_text(file), file.parent_path());
}

std::vector<ConditionId> read_control_roster(const std::filesystem::path& file,
                                             const std::vector<double>& positive_hrs) {
  const auto table = read_csv(file);
  const auto id_col = table.column("outcome_id");
  const auto kind_col = table.column("kind");
  const auto hr_col = table.column("true_hr");
  const auto parent_col = table.column("parent");
  std::vector<ConditionId> negatives;
  for (const auto& row : table.rows) {
    ControlDefinition def;
    def.outcome_id = parse_int(row[id_col]);
    const auto& kind = row[kind_col];
    if (kind == "negative")
      def.kind = ControlKind::negative;
    else if (kind == "positive")
      def.kind = ControlKind::positive;
    else
      throw ConfigError("unknown control kind '" + kind + "'");
    def.true_hr = parse_double(row[hr_col]);
    if (!row[parent_col].empty()) def.parent_negative = parse_int(row[parent_col]);
    def.validate(positive_hrs);
    if (def.kind == ControlKind::negative) negatives.push_back(def.outcome_id);
  }
  return negatives;
}

}  // namespace obsgrid
