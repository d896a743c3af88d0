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

#include "obsgrid/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "obsgrid/cohorts.hpp"
#include "obsgrid/controls.hpp"
#include "obsgrid/covariates.hpp"
#include "obsgrid/cox.hpp"
#include "obsgrid/csv.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"
#include "obsgrid/psmodel.hpp"

namespace obsgrid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct PairTask {
  std::size_t db_index = 0;
  DrugId target = 0;
  DrugId comparator = 0;
};

struct PairOutput {
  std::vector<ResultRecord> records;
  std::vector<ErrorModelRecord> error_models;
  std::vector<AttritionRow> attrition;
  std::vector<BalanceRow> balance;
  std::vector<ControlRow> controls;
  std::vector<EligibilityRow> eligibility;
  std::vector<SyntheticOccurrenceRow> synthetic;
  std::optional<PsArtifact> ps;
};

struct OutcomeSpec {
  ConditionId id = 0;
  bool negative_control = false;
};

EffectEstimate suppressed(ArmCounts counts, std::string reason) {
  EffectEstimate e;
  e.log_hr = e.se_log_hr = e.hr = e.p = kNaN;
  e.ci95 = {kNaN, kNaN};
  e.counts = counts;
  e.suppressed_reason = std::move(reason);
  return e;
}

/// Positions of `subset` subjects within `base` (both ordered by person id).
std::vector<std::size_t> subset_rows(const std::vector<Subject>& base,
                                     const std::vector<Subject>& subset, std::size_t offset) {
  std::vector<std::size_t> rows;
  rows.reserve(subset.size());
  std::size_t i = 0;
  for (const auto& s : subset) {
    while (base[i].person_id != s.person_id) ++i;
    rows.push_back(offset + i);
  }
  return rows;
}

class PairRunner {
 public:
  PairRunner(const RunConfig& config, const PatientDatabase& db, const std::string& db_name,
             const PairTask& task)
      : cfg_(config), db_(db), name_(db_name), task_(task) {}

  PairOutput run() {
    outcomes_.clear();
    for (auto o : cfg_.outcomes) outcomes_.push_back({o, false});
    for (auto o : cfg_.negative_controls) outcomes_.push_back({o, true});
    try {
      run_unchecked();
    } catch (const std::exception& e) {
      // Whatever was produced is discarded so the pair is recorded uniformly.
      out_ = PairOutput{};
      for (const auto& o : outcomes_)
        for (const auto& a : cfg_.analyses)
          add_record(a.name, o, 1.0, suppressed({}, std::string("error: ") + e.what()), kNaN, kNaN);
    }
    return std::move(out_);
  }

 private:
  ResultKey key(const std::string& analysis, ConditionId outcome) const {
    return {name_, analysis, task_.target, task_.comparator, outcome};
  }

  void add_record(const std::string& analysis, const OutcomeSpec& o, double true_hr,
                  EffectEstimate estimate, double max_smd, double equipoise) {
    ResultRecord r;
    r.key = key(analysis, o.id);
    r.is_control = o.negative_control || o.id > kSyntheticOutcomeBase;
    r.true_hr = r.is_control ? true_hr : kNaN;
    r.estimate = std::move(estimate);
    r.max_smd_after = max_smd;
    r.equipoise_share = equipoise;
    out_.records.push_back(std::move(r));
  }

  void record_attrition(const CohortPair& pair, ConditionId outcome) {
    std::size_t t = pair.initial_target, c = pair.initial_comparator;
    for (const auto& step : pair.attrition) {
      t -= step.target_removed;
      c -= step.comparator_removed;
      out_.attrition.push_back({name_, task_.target, task_.comparator, outcome, step.rule,
                                step.target_removed, step.comparator_removed, t, c});
    }
  }

  CohortPair restrict(const CohortPair& base, ConditionId outcome) const {
    if (db_.has_condition(outcome)) return restrict_to_outcome(db_, base, outcome, cfg_.criteria);
    // No occurrences anywhere: nothing to remove.
    CohortPair pair = base;
    pair.outcome = outcome;
    pair.attrition.push_back({attrition_rules::kPriorOutcome, 0, 0});
    return pair;
  }

  bool arms_large_enough(const CohortPair& pair) const {
    return pair.target_subjects.size() >= cfg_.min_arm_size &&
           pair.comparator_subjects.size() >= cfg_.min_arm_size;
  }

  std::optional<Day> first_event(const Subject& s, ConditionId outcome) const {
    if (!db_.has_condition(outcome)) return std::nullopt;
    return first_outcome_from(db_, s.person_index, outcome, s.index_day);
  }

  void run_unchecked() {
    const CohortPair base =
        build_cohort_pair(db_, task_.target, task_.comparator, std::nullopt, cfg_.criteria);
    const std::size_t nt = base.target_subjects.size();

    std::optional<std::string> pair_failure;
    if (!arms_large_enough(base)) pair_failure = "arm below min_arm_size";

    SparseCovariateMatrix x;
    std::vector<double> scores;
    if (!pair_failure) {
      x = filter_low_prevalence(extract_covariates(db_, base, cfg_.lookback_days),
                                cfg_.min_covariate_nonzero);
      std::vector<int> label(base.size(), 0);
      std::fill(label.begin(), label.begin() + static_cast<std::ptrdiff_t>(nt), 1);
      try {
        const auto seed = derive_seed(cfg_.rng_seed, {task_.db_index, static_cast<std::uint64_t>(task_.target),
                                                      static_cast<std::uint64_t>(task_.comparator), 1});
        auto model = fit_propensity_model(x, label, cfg_.ps, seed);
        scores = std::move(model.scores);
        if (cfg_.emit_ps_artifacts) {
          PsArtifact art;
          art.database = name_;
          art.target = task_.target;
          art.comparator = task_.comparator;
          art.lambda = model.fit.lambda;
          art.intercept = model.fit.intercept;
          art.converged = model.fit.converged;
          for (const auto& [col, value] : model.fit.coefficients)
            art.coefficients.emplace_back(x.column(col).covariate_id, value);
          const auto diag = overlap_diagnostics(scores, label);
          art.target_histogram = diag.target_histogram;
          art.comparator_histogram = diag.comparator_histogram;
          art.equipoise_share = diag.equipoise_share;
          out_.ps = std::move(art);
        }
      } catch (const DegenerateFitError& e) {
        pair_failure = std::string("propensity model failed: ") + e.what();
      }
    }

    for (const auto& o : outcomes_) {
      const CohortPair pair = restrict(base, o.id);
      record_attrition(pair, o.id);
      const ArmCounts subjects{pair.target_subjects.size(), pair.comparator_subjects.size(), 0, 0};
      if (pair_failure || !arms_large_enough(pair)) {
        const std::string reason = pair_failure.value_or("arm below min_arm_size");
        for (const auto& a : cfg_.analyses) add_record(a.name, o, 1.0, suppressed(subjects, reason), kNaN, kNaN);
        if (o.negative_control) note_control(o.id, std::nullopt, 1.0);
        continue;
      }
      run_outcome(base, pair, o, x, scores);
    }

    calibrate_contexts();
  }

  void note_control(ConditionId id, std::optional<ConditionId> parent, double true_hr) {
    out_.controls.push_back(
        {id, parent ? ControlKind::positive : ControlKind::negative, true_hr, parent});
  }

  void run_outcome(const CohortPair& base, const CohortPair& pair, const OutcomeSpec& o,
                   const SparseCovariateMatrix& x, const std::vector<double>& base_scores) {
    const std::size_t nt = pair.target_subjects.size();
    const std::size_t n = pair.size();
    std::vector<std::size_t> rows = subset_rows(base.target_subjects, pair.target_subjects, 0);
    const auto comparator_rows =
        subset_rows(base.comparator_subjects, pair.comparator_subjects, base.target_subjects.size());
    rows.insert(rows.end(), comparator_rows.begin(), comparator_rows.end());

    std::vector<double> scores(n);
    std::vector<int> treated(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = base_scores[rows[i]];
      treated[i] = i < nt ? 1 : 0;
    }
    const auto strata = stratify(scores, cfg_.ps.n_strata);
    const auto x_sub = x.select_rows(rows);
    const auto balance = standardized_differences(x_sub, treated, std::span<const int>(strata.stratum_of));
    const double equipoise = overlap_diagnostics(scores, treated).equipoise_share;
    for (const auto& col : balance.columns)
      out_.balance.push_back({name_, task_.target, task_.comparator, o.id, col.covariate_id,
                              col.smd_before, col.smd_after});

    auto subject = [&](std::size_t i) -> const Subject& {
      return i < nt ? pair.target_subjects[i] : pair.comparator_subjects[i - nt];
    };
    std::vector<std::optional<Day>> first(n);
    for (std::size_t i = 0; i < n; ++i) first[i] = first_event(subject(i), o.id);
    if (o.negative_control) note_control(o.id, std::nullopt, 1.0);

    for (std::size_t ai = 0; ai < cfg_.analyses.size(); ++ai) {
      const auto& analysis = cfg_.analyses[ai];
      std::vector<RiskWindow> windows(n);
      std::vector<SurvivalRecord> data(n);
      for (std::size_t i = 0; i < n; ++i) {
        windows[i] = risk_window(db_, subject(i), i < nt ? task_.target : task_.comparator,
                                 analysis.policy);
        const auto fu = follow_up(windows[i], first[i]);
        data[i] = {fu.follow_up_days, fu.event, i < nt, strata.stratum_of[i]};
      }
      add_record(analysis.name, o, 1.0, fit_stratified_cox(data), balance.max_abs_smd_after,
                 equipoise);
      if (o.negative_control && !cfg_.positive_control_hrs.empty())
        synthesize_positives(pair, o, ai, x_sub, windows, data, balance.max_abs_smd_after, equipoise);
    }
  }

  void synthesize_positives(const CohortPair& pair, const OutcomeSpec& o, std::size_t ai,
                            const SparseCovariateMatrix& x_sub, const std::vector<RiskWindow>& windows,
                            const std::vector<SurvivalRecord>& negative_data, double max_smd,
                            double equipoise) {
    const auto& analysis = cfg_.analyses[ai];
    const std::size_t nt = pair.target_subjects.size();
    const std::size_t n = pair.size();
    std::size_t persons = 0, target_persons = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (negative_data[i].event) {
        ++persons;
        if (i < nt) ++target_persons;
      }
    const auto elig =
        check_eligibility(persons, target_persons, cfg_.controls.min_model, cfg_.controls.min_inject);
    out_.eligibility.push_back({{name_, analysis.name, task_.target, task_.comparator}, o.id, persons,
                                target_persons, elig.model_ok, elig.inject_ok});
    if (!elig.model_ok || !elig.inject_ok) return;

    std::vector<double> events(n), days(n), weights(n);
    for (std::size_t i = 0; i < n; ++i) {
      events[i] = negative_data[i].event ? 1.0 : 0.0;
      days[i] = windows[i].length();
      weights[i] = days[i] > 0 ? 1.0 : 0.0;
    }
    OutcomeRateModel rate_model;
    try {
      rate_model = fit_outcome_rate_model_at_ratio(x_sub, events, days,
                                                   cfg_.controls.outcome_model_lambda_ratio,
                                                   cfg_.ps.solver, weights);
    } catch (const DegenerateFitError&) {
      return;
    }
    const auto all_rates = rate_model.rates(x_sub);
    const std::span<const double> target_rates(all_rates.data(), nt);
    const std::span<const RiskWindow> target_windows(windows.data(), nt);

    for (std::size_t h = 0; h < cfg_.positive_control_hrs.size(); ++h) {
      const double hr = cfg_.positive_control_hrs[h];
      const ConditionId id = synthetic_outcome_id(o.id, h);
      const auto seed = derive_seed(cfg_.rng_seed, {task_.db_index, static_cast<std::uint64_t>(task_.target),
                                                    static_cast<std::uint64_t>(task_.comparator), 2, ai,
                                                    static_cast<std::uint64_t>(o.id), h});
      const auto injection =
          inject_positive_control(db_, pair, o.id, target_rates, target_windows, hr, id, seed);
      std::vector<SurvivalRecord> data = negative_data;
      for (std::size_t i = 0; i < nt; ++i) {
        const auto fu = follow_up(windows[i], injection.target_first_event[i]);
        data[i].follow_up_days = fu.follow_up_days;
        data[i].event = fu.event;
      }
      add_record(analysis.name, {id, false}, hr, fit_stratified_cox(data), max_smd, equipoise);
      note_control(id, o.id, hr);
      if (cfg_.write_synthetic_outcomes)
        for (const auto& occ : injection.occurrences(pair))
          out_.synthetic.push_back({{name_, analysis.name, task_.target, task_.comparator}, occ});
    }
  }

  void calibrate_contexts() {
    for (const auto& analysis : cfg_.analyses) {
      ContextKey context{name_, analysis.name, task_.target, task_.comparator};
      std::vector<ControlEstimate> controls;
      for (const auto& r : out_.records)
        if (r.key.analysis == analysis.name && r.is_control && r.estimate.estimable &&
            r.estimate.se_log_hr > 0)
          controls.push_back({r.estimate.log_hr, r.estimate.se_log_hr, std::log(r.true_hr),
                              control_parent(r.key.outcome)});
      ErrorModelRecord m{context, controls.size(), fit_error_model(controls, cfg_.calibration)};
      if (m.model)
        for (auto& r : out_.records)
          if (r.key.analysis == analysis.name) apply_calibration(r.estimate, *m.model);
      out_.error_models.push_back(std::move(m));
    }
  }

  const RunConfig& cfg_;
  const PatientDatabase& db_;
  const std::string& name_;
  PairTask task_;
  std::vector<OutcomeSpec> outcomes_;
  PairOutput out_;
};

}  // namespace

std::vector<std::pair<std::string, PatientDatabase>> load_databases(const RunConfig& config,
                                                                   std::size_t workers) {
  std::vector<std::pair<std::string, PatientDatabase>> out(config.databases.size());
  std::vector<std::exception_ptr> errors(config.databases.size());
  parallel_for(config.databases.size(), workers, [&](std::size_t i) {
    const auto& spec = config.databases[i];
    try {
      out[i].first = spec.name;
      out[i].second = spec.simulate ? generate_database(*spec.simulate) : read_database(*spec.path);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

GridResult run_grid(const RunConfig& config, const std::vector<NamedDatabase>& databases) {
  config.validate();
  std::vector<PairTask> tasks;
  for (std::size_t d = 0; d < databases.size(); ++d)
    for (auto t : config.treatments)
      for (auto c : config.treatments)
        if (t != c) tasks.push_back({d, t, c});

  std::vector<PairOutput> outputs(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& named = databases[task.db_index];
    outputs[i] = PairRunner(config, *named.database, named.name, task).run();
  });

  GridResult result;
  std::set<ControlRow> controls;
  for (auto& o : outputs) {
    for (auto& r : o.records) result.store.append(std::move(r));
    for (auto& m : o.error_models) result.store.set_error_model(std::move(m));
    result.attrition.insert(result.attrition.end(), o.attrition.begin(), o.attrition.end());
    result.balance.insert(result.balance.end(), o.balance.begin(), o.balance.end());
    result.eligibility.insert(result.eligibility.end(), o.eligibility.begin(), o.eligibility.end());
    result.synthetic_outcomes.insert(result.synthetic_outcomes.end(), o.synthetic.begin(),
                                     o.synthetic.end());
    controls.insert(o.controls.begin(), o.controls.end());
    if (o.ps) result.ps_artifacts.push_back(std::move(*o.ps));
  }
  for (auto nc : config.negative_controls) controls.insert({nc, ControlKind::negative, 1.0, std::nullopt});
  result.controls.assign(controls.begin(), controls.end());
  return result;
}

GridResult run_grid(const RunConfig& config) {
  config.validate();
  auto loaded = load_databases(config, config.workers);
  std::vector<NamedDatabase> named;
  for (const auto& [name, db] : loaded) named.push_back({name, &db});
  return run_grid(config, named);
}

void write_grid_result(const GridResult& result, const std::filesystem::path& dir) {
  write_store(result.store, dir);
  {
    CsvWriter w(dir / grid_files::kAttrition,
                {"database", "target", "comparator", "outcome", "rule", "target_removed",
                 "comparator_removed", "target_remaining", "comparator_remaining"});
    for (const auto& a : result.attrition) {
      w.field(a.database).field(a.target).field(a.comparator).field(a.outcome).field(a.rule);
      w.field(a.target_removed).field(a.comparator_removed).field(a.target_remaining);
      w.field(a.comparator_remaining).end_row();
    }
  }
  {
    CsvWriter w(dir / grid_files::kBalance,
                {"database", "target", "comparator", "outcome", "covariate_id", "smd_before",
                 "smd_after"});
    for (const auto& b : result.balance) {
      w.field(b.database).field(b.target).field(b.comparator).field(b.outcome);
      w.field(b.covariate_id).field(b.smd_before).field(b.smd_after).end_row();
    }
  }
  {
    CsvWriter w(dir / grid_files::kControls, {"outcome_id", "kind", "true_hr", "parent"});
    for (const auto& c : result.controls) {
      w.field(c.outcome_id).field(to_string(c.kind)).field(c.true_hr);
      if (c.parent)
        w.field(*c.parent);
      else
        w.field(std::string_view{});
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / grid_files::kEligibility,
                {"database", "analysis", "target", "comparator", "negative_control",
                 "outcome_persons", "target_outcome_persons", "model_ok", "inject_ok"});
    for (const auto& e : result.eligibility) {
      w.field(e.context.database).field(e.context.analysis).field(e.context.target);
      w.field(e.context.comparator).field(e.negative).field(e.outcome_persons);
      w.field(e.target_outcome_persons).field(e.model_ok).field(e.inject_ok).end_row();
    }
  }
  if (!result.synthetic_outcomes.empty()) {
    CsvWriter w(dir / grid_files::kSyntheticOutcomes,
                {"database", "analysis", "target", "comparator", "person_id", "condition_id", "day"});
    for (const auto& s : result.synthetic_outcomes) {
      w.field(s.context.database).field(s.context.analysis).field(s.context.target);
      w.field(s.context.comparator).field(s.occurrence.person_id).field(s.occurrence.condition_id);
      w.field(s.occurrence.day).end_row();
    }
  }
  if (!result.ps_artifacts.empty()) {
    CsvWriter models(dir / grid_files::kPsModels,
                     {"database", "target", "comparator", "lambda", "intercept", "nonzero",
                      "converged", "equipoise_share"});
    CsvWriter coefs(dir / grid_files::kPsCoefficients,
                    {"database", "target", "comparator", "covariate_id", "coefficient"});
    CsvWriter hist(dir / grid_files::kPsHistograms,
                   {"database", "target", "comparator", "bin_lower", "bin_upper", "target_count",
                    "comparator_count"});
    for (const auto& p : result.ps_artifacts) {
      models.field(p.database).field(p.target).field(p.comparator).field(p.lambda);
      models.field(p.intercept).field(p.coefficients.size()).field(p.converged);
      models.field(p.equipoise_share).end_row();
      for (const auto& [id, value] : p.coefficients)
        coefs.field(p.database).field(p.target).field(p.comparator).field(id).field(value).end_row();
      const double width = 1.0 / static_cast<double>(p.target_histogram.size());
      for (std::size_t b = 0; b < p.target_histogram.size(); ++b) {
        hist.field(p.database).field(p.target).field(p.comparator).field(b * width);
        hist.field((b + 1) * width).field(p.target_histogram[b]).field(p.comparator_histogram[b]);
        hist.end_row();
      }
    }
  }
}

}  // namespace obsgrid
