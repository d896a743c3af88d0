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

#include "obsgrid/store.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "obsgrid/controls.hpp"
#include "obsgrid/csv.hpp"
#include "obsgrid/errors.hpp"

namespace obsgrid {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

ContextKey context_of(const ResultKey& key) {
  return {key.database, key.analysis, key.target, key.comparator};
}

ConditionId control_parent(ConditionId outcome) {
  if (outcome > kSyntheticOutcomeBase) return (outcome - kSyntheticOutcomeBase) / 100;
  return outcome;
}

void ResultStore::append(ResultRecord record) {
  const auto key = record.key;
  if (!records_.emplace(key, std::move(record)).second)
    throw ConfigError("duplicate result key for outcome " + std::to_string(key.outcome));
}

void ResultStore::set_error_model(ErrorModelRecord record) {
  const auto key = record.context;
  error_models_.insert_or_assign(key, std::move(record));
}

std::vector<const ResultRecord*> ResultStore::records() const {
  std::vector<const ResultRecord*> out;
  out.reserve(records_.size());
  for (const auto& [k, r] : records_) out.push_back(&r);
  return out;
}

const ResultRecord* ResultStore::find(const ResultKey& key) const {
  const auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

std::vector<std::string> ResultStore::databases() const {
  std::set<std::string> s;
  for (const auto& [k, r] : records_) s.insert(k.database);
  return {s.begin(), s.end()};
}

std::vector<std::string> ResultStore::analyses() const {
  std::set<std::string> s;
  for (const auto& [k, r] : records_) s.insert(k.analysis);
  return {s.begin(), s.end()};
}

std::vector<ContextKey> ResultStore::contexts() const {
  std::set<ContextKey> s;
  for (const auto& [k, r] : records_) s.insert(context_of(k));
  return {s.begin(), s.end()};
}

std::vector<ControlEstimate> ResultStore::control_estimates(const ContextKey& context) const {
  std::vector<ControlEstimate> out;
  const ResultKey from{context.database, context.analysis, context.target, context.comparator,
                       std::numeric_limits<ConditionId>::min()};
  for (auto it = records_.lower_bound(from); it != records_.end(); ++it) {
    if (context_of(it->first) != context) break;
    const auto& r = it->second;
    if (!r.is_control || !r.estimate.estimable || !(r.estimate.se_log_hr > 0)) continue;
    out.push_back({r.estimate.log_hr, r.estimate.se_log_hr, std::log(r.true_hr),
                   control_parent(r.key.outcome)});
  }
  return out;
}

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> columns{
      "database",   "analysis",        "target",           "comparator",        "outcome",
      "is_control", "true_hr",         "target_subjects",  "comparator_subjects",
      "target_events", "comparator_events", "log_hr",      "se",                "hr",
      "ci_lb",      "ci_ub",           "p",                "cal_ci_lb",         "cal_ci_ub",
      "cal_p",      "max_smd_after",   "equipoise_share",  "suppressed_reason"};
  return columns;
}

void write_store(const ResultStore& store, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    CsvWriter w(dir / store_files::kResults, result_columns());
    for (const auto* r : store.records()) {
      const auto& e = r->estimate;
      w.field(r->key.database).field(r->key.analysis).field(r->key.target).field(r->key.comparator);
      w.field(r->key.outcome).field(r->is_control).field(r->true_hr);
      w.field(e.counts.target_subjects).field(e.counts.comparator_subjects);
      w.field(e.counts.target_events).field(e.counts.comparator_events);
      if (e.estimable) {
        w.field(e.log_hr).field(e.se_log_hr).field(e.hr).field(e.ci95.first).field(e.ci95.second);
        w.field(e.p);
      } else {
        for (int i = 0; i < 6; ++i) w.field(kNaN);
      }
      if (e.calibrated_ci95) {
        w.field(e.calibrated_ci95->first).field(e.calibrated_ci95->second);
        w.field(e.calibrated_p.value_or(kNaN));
      } else {
        w.field(kNaN).field(kNaN).field(kNaN);
      }
      w.field(r->max_smd_after).field(r->equipoise_share);
      w.field(e.suppressed_reason.value_or(""));
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / store_files::kErrorModels,
                {"database", "analysis", "target", "comparator", "controls", "available", "a", "b",
                 "c", "d", "fitted_on", "converged"});
    for (const auto& [k, m] : store.error_models()) {
      w.field(k.database).field(k.analysis).field(k.target).field(k.comparator);
      w.field(m.controls_available).field(m.model.has_value());
      if (m.model) {
        w.field(m.model->a).field(m.model->b).field(m.model->c).field(m.model->d);
        w.field(m.model->fitted_on).field(m.model->converged);
      } else {
        for (int i = 0; i < 4; ++i) w.field(kNaN);
        w.field(std::size_t{0}).field(false);
      }
      w.end_row();
    }
  }
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = ResultStore::kSchemaVersion;
  manifest["results"] = store_files::kResults;
  manifest["error_models"] = store_files::kErrorModels;
  manifest["records"] = store.size();
  manifest["columns"] = result_columns();
  std::ofstream out(dir / store_files::kManifest, std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write manifest in " + dir.string());
}

ResultStore read_store(const std::filesystem::path& dir) {
  const auto manifest_path = dir / store_files::kManifest;
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("no result store at " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed store manifest: ") + e.what());
  }
  if (manifest.value("schema_version", -1) != ResultStore::kSchemaVersion)
    throw IoError("unsupported store schema version");

  ResultStore store;
  const auto table = read_csv(dir / store_files::kResults);
  if (table.header != result_columns()) throw IoError("results.csv has an unexpected header");
  for (const auto& row : table.rows) {
    ResultRecord r;
    std::size_t i = 0;
    r.key.database = row[i++];
    r.key.analysis = row[i++];
    r.key.target = parse_int(row[i++]);
    r.key.comparator = parse_int(row[i++]);
    r.key.outcome = parse_int(row[i++]);
    r.is_control = parse_int(row[i++]) != 0;
    r.true_hr = parse_double(row[i++]);
    auto& e = r.estimate;
    e.counts.target_subjects = static_cast<std::size_t>(parse_int(row[i++]));
    e.counts.comparator_subjects = static_cast<std::size_t>(parse_int(row[i++]));
    e.counts.target_events = static_cast<std::size_t>(parse_int(row[i++]));
    e.counts.comparator_events = static_cast<std::size_t>(parse_int(row[i++]));
    const double log_hr = parse_double(row[i++]);
    const double se = parse_double(row[i++]);
    const double hr = parse_double(row[i++]);
    const double lb = parse_double(row[i++]);
    const double ub = parse_double(row[i++]);
    const double p = parse_double(row[i++]);
    e.estimable = !std::isnan(log_hr);
    if (e.estimable) {
      e.log_hr = log_hr;
      e.se_log_hr = se;
      e.hr = hr;
      e.ci95 = {lb, ub};
      e.p = p;
    } else {
      e.log_hr = e.se_log_hr = e.hr = e.p = kNaN;
      e.ci95 = {kNaN, kNaN};
    }
    const double clb = parse_double(row[i++]);
    const double cub = parse_double(row[i++]);
    const double cp = parse_double(row[i++]);
    if (!std::isnan(clb)) {
      e.calibrated_ci95 = std::pair{clb, cub};
      if (!std::isnan(cp)) e.calibrated_p = cp;
    }
    r.max_smd_after = parse_double(row[i++]);
    r.equipoise_share = parse_double(row[i++]);
    if (!row[i].empty()) e.suppressed_reason = row[i];
    store.append(std::move(r));
  }

  const auto models_path = dir / store_files::kErrorModels;
  if (std::filesystem::exists(models_path)) {
    const auto models = read_csv(models_path);
    for (const auto& row : models.rows) {
      ErrorModelRecord m;
      m.context = {row[0], row[1], parse_int(row[2]), parse_int(row[3])};
      m.controls_available = static_cast<std::size_t>(parse_int(row[4]));
      if (parse_int(row[5]) != 0) {
        SystematicErrorModel model{parse_double(row[6]), parse_double(row[7]), parse_double(row[8]),
                                   parse_double(row[9])};
        model.fitted_on = static_cast<std::size_t>(parse_int(row[10]));
        model.converged = parse_int(row[11]) != 0;
        m.model = model;
      }
      store.set_error_model(std::move(m));
    }
  }
  return store;
}

}  // namespace obsgrid
