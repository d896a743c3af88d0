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

#include "obsgrid/controls.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "obsgrid/errors.hpp"

namespace obsgrid {

const char* to_string(ControlKind kind) {
  return kind == ControlKind::negative ? "negative" : "positive";
}

void ControlDefinition::validate(std::span<const double> configured_hrs) const {
  if (kind == ControlKind::negative) {
    if (true_hr != 1.0) throw ConfigError("negative control must have true_hr 1");
    if (parent_negative) throw ConfigError("negative control cannot have a parent");
    return;
  }
  if (!parent_negative) throw ConfigError("positive control needs a parent negative control");
  if (std::find(configured_hrs.begin(), configured_hrs.end(), true_hr) == configured_hrs.end())
    throw ConfigError("positive control true_hr not in the configured set");
}

Eligibility check_eligibility(std::size_t total_outcome_persons,
                              std::size_t pre_injection_persons_in_arm, std::size_t min_model,
                              std::size_t min_inject) {
  Eligibility e;
  e.model_ok = total_outcome_persons >= min_model;
  e.inject_ok = pre_injection_persons_in_arm >= min_inject;
  return e;
}

std::vector<double> OutcomeRateModel::rates(const SparseCovariateMatrix& m) const {
  SparseGlmFit f;
  f.intercept = intercept;
  f.coefficients = coefficients;
  auto eta = f.linear_predictor(m);
  for (auto& e : eta) e = std::exp(e);
  return eta;
}

namespace {

std::vector<double> log_offsets(std::span<const double> person_days, std::span<const double> weights) {
  std::vector<double> offset(person_days.size(), 0.0);
  for (std::size_t i = 0; i < offset.size(); ++i) {
    const bool used = weights.empty() || weights[i] != 0.0;
    if (!used) continue;
    if (!(person_days[i] > 0.0)) throw ConfigError("person_days must be > 0 for every fitted row");
    offset[i] = std::log(person_days[i]);
  }
  return offset;
}

}  // namespace

OutcomeRateModel fit_outcome_rate_model(const SparseCovariateMatrix& m, std::span<const double> events,
                                        std::span<const double> person_days, double lambda,
                                        CoordinateDescentOptions options,
                                        std::span<const double> weights) {
  if (person_days.size() != m.rows()) throw ConfigError("person_days length mismatch");
  const auto offset = log_offsets(person_days, weights);
  GlmProblem problem{&m, events, offset, weights, GlmFamily::poisson};
  const auto fit = fit_sparse_glm(problem, lambda, options);
  OutcomeRateModel model;
  model.intercept = fit.intercept;
  model.coefficients = fit.coefficients;
  model.lambda = fit.lambda;
  model.converged = fit.converged;
  model.iterations = fit.iterations;
  return model;
}

OutcomeRateModel fit_outcome_rate_model_at_ratio(const SparseCovariateMatrix& m,
                                                 std::span<const double> events,
                                                 std::span<const double> person_days,
                                                 double lambda_ratio, CoordinateDescentOptions options,
                                                 std::span<const double> weights) {
  if (!(lambda_ratio > 0.0)) throw ConfigError("lambda ratio must be > 0");
  if (person_days.size() != m.rows()) throw ConfigError("person_days length mismatch");
  const auto offset = log_offsets(person_days, weights);
  GlmProblem problem{&m, events, offset, weights, GlmFamily::poisson};
  CoordinateDescent solver(problem, options);
  const auto fit = solver.fit(lambda_ratio * solver.lambda_max());
  OutcomeRateModel model;
  model.intercept = fit.intercept;
  model.coefficients = fit.coefficients;
  model.lambda = fit.lambda;
  model.converged = fit.converged;
  model.iterations = fit.iterations;
  return model;
}

double outcome_rate_lambda_max(const SparseCovariateMatrix& m, std::span<const double> events,
                               std::span<const double> person_days, std::span<const double> weights) {
  const auto offset = log_offsets(person_days, weights);
  GlmProblem problem{&m, events, offset, weights, GlmFamily::poisson};
  return CoordinateDescent(problem).lambda_max();
}

ConditionId synthetic_outcome_id(ConditionId parent, std::size_t level_index) {
  if (level_index >= 99) throw ConfigError("too many positive control levels");
  return kSyntheticOutcomeBase + parent * 100 + static_cast<ConditionId>(level_index + 1);
}

std::vector<std::optional<int>> draw_injected_offsets(std::span<const double> rates,
                                                      std::span<const RiskWindow> windows,
                                                      double rate_multiplier, std::uint64_t seed) {
  if (rates.size() != windows.size()) throw ConfigError("rates and windows length mismatch");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::optional<int>> out(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double t = windows[i].length();
    const double mean = rate_multiplier * rates[i] * t;
    if (!(mean > 0.0)) continue;
    const int k = std::poisson_distribution<int>(mean)(rng);
    if (k == 0) continue;
    double earliest = 1.0;
    for (int draw = 0; draw < k; ++draw) earliest = std::min(earliest, unit(rng));
    out[i] = std::min(static_cast<int>(earliest * t), static_cast<int>(t) - 1);
  }
  return out;
}

InjectionResult inject_positive_control(const PatientDatabase& db, const CohortPair& pair,
                                        ConditionId negative_outcome,
                                        std::span<const double> target_rates,
                                        std::span<const RiskWindow> target_windows, double target_hr,
                                        ConditionId synthetic_id, std::uint64_t seed) {
  if (!(target_hr > 1.0)) throw ConfigError("positive control target_hr must be > 1");
  if (target_rates.size() != pair.target_subjects.size() ||
      target_windows.size() != pair.target_subjects.size())
    throw ConfigError("per-subject inputs must match the target arm");
  InjectionResult r;
  r.definition = {synthetic_id, ControlKind::positive, target_hr, negative_outcome};
  const auto offsets = draw_injected_offsets(target_rates, target_windows, target_hr - 1.0, seed);
  r.target_first_event.resize(pair.target_subjects.size());
  r.injected.assign(pair.target_subjects.size(), 0);
  for (std::size_t i = 0; i < pair.target_subjects.size(); ++i) {
    const auto& s = pair.target_subjects[i];
    auto original = first_outcome_from(db, s.person_index, negative_outcome, s.index_day);
    r.target_first_event[i] = original;
    if (offsets[i]) {
      const Day injected = target_windows[i].start + *offsets[i];
      if (!original || injected < *original) {
        r.target_first_event[i] = injected;
        r.injected[i] = 1;
        ++r.injected_subjects;
      }
    }
  }
  r.comparator_first_event.resize(pair.comparator_subjects.size());
  for (std::size_t i = 0; i < pair.comparator_subjects.size(); ++i) {
    const auto& s = pair.comparator_subjects[i];
    r.comparator_first_event[i] = first_outcome_from(db, s.person_index, negative_outcome, s.index_day);
  }
  return r;
}

std::vector<ConditionOccurrence> InjectionResult::occurrences(const CohortPair& pair) const {
  std::vector<ConditionOccurrence> rows;
  for (std::size_t i = 0; i < target_first_event.size(); ++i)
    if (target_first_event[i])
      rows.push_back({pair.target_subjects[i].person_id, definition.outcome_id, *target_first_event[i]});
  for (std::size_t i = 0; i < comparator_first_event.size(); ++i)
    if (comparator_first_event[i])
      rows.push_back(
          {pair.comparator_subjects[i].person_id, definition.outcome_id, *comparator_first_event[i]});
  std::sort(rows.begin(), rows.end(), [](const ConditionOccurrence& a, const ConditionOccurrence& b) {
    return a.person_id < b.person_id;
  });
  return rows;
}

}  // namespace obsgrid
