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

#include "obsgrid/reports.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "obsgrid/csv.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/heterogeneity.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool excludes_one(double lb, double ub) { return lb > 1.0 || ub < 1.0; }

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::vector<double> default_coverage_levels() {
  std::vector<double> levels;
  for (int i = 1; i <= 19; ++i) levels.push_back(i * 0.05);
  levels.push_back(0.99);
  return levels;
}

std::vector<ContextCoverage> loo_coverage(const ResultStore& store, std::span<const double> levels,
                                          const ErrorModelOptions& options) {
  std::vector<ContextCoverage> out;
  for (const auto& context : store.contexts()) {
    const auto controls = store.control_estimates(context);
    std::set<std::int64_t> groups;
    for (const auto& c : controls) groups.insert(c.parent_negative);
    if (groups.size() < 2) continue;
    out.push_back({context, loo_cross_validate(controls, levels, options)});
  }
  return out;
}

void write_coverage_curves(const std::vector<ContextCoverage>& curves,
                           const std::filesystem::path& file) {
  CsvWriter w(file, {"database", "analysis", "target", "comparator", "stratum", "level", "coverage",
                     "controls"});
  for (const auto& cc : curves) {
    const auto& k = cc.context;
    auto emit = [&](const std::string& stratum, const std::vector<double>& values, std::size_t n) {
      for (std::size_t l = 0; l < cc.curve.levels.size(); ++l) {
        w.field(k.database).field(k.analysis).field(k.target).field(k.comparator).field(stratum);
        w.field(cc.curve.levels[l]).field(values[l]).field(n).end_row();
      }
    };
    for (const auto& [true_hr, values] : cc.curve.by_true_hr)
      emit(format_double(true_hr), values, cc.curve.controls_by_true_hr.at(true_hr));
    emit("all", cc.curve.pooled, cc.curve.evaluated_controls);
  }
}

std::string ReportSummary::to_json() const {
  nlohmann::ordered_json j;
  j["records"] = records;
  j["estimable"] = estimable;
  j["calibrated"] = calibrated;
  j["control_estimates"] = control_estimates;
  j["control_coverage_nominal"] = number_or_null(control_coverage_nominal);
  j["control_coverage_calibrated"] = number_or_null(control_coverage_calibrated);
  j["i2_triplets"] = i2_triplets;
  j["i2_share_below_025_nominal"] = number_or_null(i2_share_below_025_nominal);
  j["i2_share_below_025_calibrated"] = number_or_null(i2_share_below_025_calibrated);
  return j.dump(2);
}

ReportSummary emit_reports(const ResultStore& store, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  ReportSummary summary;
  summary.records = store.size();
  std::vector<IntervalWithTruth> nominal_controls, calibrated_controls;

  {
    CsvWriter w(out_dir / report_files::kEstimateScatter,
                {"database", "analysis", "target", "comparator", "outcome", "is_control",
                 "calibrated", "log_hr", "se", "significant"});
    for (const auto* r : store.records()) {
      const auto& e = r->estimate;
      if (!e.estimable) continue;
      ++summary.estimable;
      auto row = [&](bool calibrated, double log_hr, double se, bool significant) {
        w.field(r->key.database).field(r->key.analysis).field(r->key.target);
        w.field(r->key.comparator).field(r->key.outcome).field(r->is_control).field(calibrated);
        w.field(log_hr).field(se).field(significant).end_row();
      };
      row(false, e.log_hr, e.se_log_hr, excludes_one(e.ci95.first, e.ci95.second));
      if (e.calibrated_ci95) {
        ++summary.calibrated;
        const auto [lb, ub] = *e.calibrated_ci95;
        row(true, 0.5 * (std::log(lb) + std::log(ub)), se_from_interval(lb, ub), excludes_one(lb, ub));
      }
      if (r->is_control) {
        nominal_controls.push_back({e.ci95.first, e.ci95.second, r->true_hr});
        if (e.calibrated_ci95)
          calibrated_controls.push_back({e.calibrated_ci95->first, e.calibrated_ci95->second, r->true_hr});
      }
    }
  }
  summary.control_estimates = nominal_controls.size();
  summary.control_coverage_nominal = nominal_controls.empty() ? kNaN : coverage(nominal_controls);
  summary.control_coverage_calibrated =
      calibrated_controls.empty() ? kNaN : coverage(calibrated_controls);

  {
    CsvWriter w(out_dir / report_files::kForest,
                {"outcome", "database", "analysis", "target", "comparator", "hr", "ci_lb", "ci_ub",
                 "cal_ci_lb", "cal_ci_ub", "target_subjects", "comparator_subjects", "target_events",
                 "comparator_events"});
    std::vector<const ResultRecord*> rows;
    for (const auto* r : store.records())
      if (!r->is_control && r->estimate.estimable) rows.push_back(r);
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRecord* a, const ResultRecord* b) {
      return a->key.outcome < b->key.outcome;
    });
    for (const auto* r : rows) {
      const auto& e = r->estimate;
      w.field(r->key.outcome).field(r->key.database).field(r->key.analysis).field(r->key.target);
      w.field(r->key.comparator).field(e.hr).field(e.ci95.first).field(e.ci95.second);
      w.field(e.calibrated_ci95 ? e.calibrated_ci95->first : kNaN);
      w.field(e.calibrated_ci95 ? e.calibrated_ci95->second : kNaN);
      w.field(e.counts.target_subjects).field(e.counts.comparator_subjects);
      w.field(e.counts.target_events).field(e.counts.comparator_events).end_row();
    }
  }

  {
    CsvWriter w(out_dir / report_files::kCalibrationScatter,
                {"database", "analysis", "target", "comparator", "outcome", "true_hr", "log_hr", "se",
                 "ci_lb", "ci_ub", "cal_ci_lb", "cal_ci_ub", "covered_nominal", "covered_calibrated"});
    for (const auto* r : store.records()) {
      const auto& e = r->estimate;
      if (!r->is_control || !e.estimable) continue;
      w.field(r->key.database).field(r->key.analysis).field(r->key.target).field(r->key.comparator);
      w.field(r->key.outcome).field(r->true_hr).field(e.log_hr).field(e.se_log_hr);
      w.field(e.ci95.first).field(e.ci95.second);
      if (e.calibrated_ci95) {
        w.field(e.calibrated_ci95->first).field(e.calibrated_ci95->second);
      } else {
        w.field(kNaN).field(kNaN);
      }
      w.field(e.ci95.first <= r->true_hr && r->true_hr <= e.ci95.second);
      if (e.calibrated_ci95)
        w.field(e.calibrated_ci95->first <= r->true_hr && r->true_hr <= e.calibrated_ci95->second);
      else
        w.field(std::string_view{});
      w.end_row();
    }
  }

  const auto levels = default_coverage_levels();
  write_coverage_curves(loo_coverage(store, levels), out_dir / report_files::kCoverageCurve);

  {
    const auto nominal = i2_summary(store, false);
    const auto calibrated = i2_summary(store, true);
    summary.i2_triplets = nominal.triplets.size();
    summary.i2_share_below_025_nominal = nominal.share_below_025;
    summary.i2_share_below_025_calibrated = calibrated.share_below_025;
    CsvWriter w(out_dir / report_files::kI2,
                {"analysis", "target", "comparator", "outcome", "calibrated", "i2"});
    for (const auto* s : {&nominal, &calibrated})
      for (const auto& t : s->triplets) {
        w.field(t.analysis).field(t.target).field(t.comparator).field(t.outcome);
        w.field(s == &calibrated).field(t.i2).end_row();
      }
    CsvWriter h(out_dir / report_files::kI2Histogram, {"calibrated", "bin_lower", "bin_upper", "count"});
    for (const auto* s : {&nominal, &calibrated})
      for (std::size_t b = 0; b < s->histogram.size(); ++b)
        h.field(s == &calibrated).field(s->bin_edges[b]).field(s->bin_edges[b + 1]).field(s->histogram[b]).end_row();
  }

  {
    CsvWriter w(out_dir / report_files::kTransitivity,
                {"database", "analysis", "qualifying", "holding", "fraction"});
    for (const auto& db : store.databases())
      for (const auto& analysis : store.analyses()) {
        const auto t = transitivity_audit(store, db, analysis);
        w.field(db).field(analysis).field(t.qualifying).field(t.holding).field(t.fraction).end_row();
      }
  }

  std::ofstream out(out_dir / report_files::kSummary, std::ios::binary);
  out << summary.to_json() << '\n';
  if (!out) throw IoError("cannot write report summary in " + out_dir.string());
  return summary;
}

}  // namespace obsgrid
