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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "obsgrid/cohorts.hpp"
#include "obsgrid/covariates.hpp"
#include "obsgrid/database.hpp"
#include "obsgrid/glm.hpp"

namespace obsgrid {

enum class ControlKind { negative, positive };

const char* to_string(ControlKind kind);

struct ControlDefinition {
  ConditionId outcome_id = 0;
  ControlKind kind = ControlKind::negative;
  double true_hr = 1.0;
  std::optional<ConditionId> parent_negative;

  /// Negatives must have true_hr 1 and no parent; positives a parent and a
  /// true_hr from `configured_hrs`. Throws ConfigError otherwise.
  void validate(std::span<const double> configured_hrs) const;
};

inline constexpr double kPositiveControlHrs[] = {1.5, 2.0, 4.0};

struct Eligibility {
  bool model_ok = false;
  bool inject_ok = false;
};

/// model_ok iff total_outcome_persons >= min_model; inject_ok iff the arm
/// considered for injection has >= min_inject persons with the outcome.
Eligibility check_eligibility(std::size_t total_outcome_persons,
                              std::size_t pre_injection_persons_in_arm, std::size_t min_model = 100,
                              std::size_t min_inject = 25);

/// Poisson model of the per-day outcome rate: rate_i = exp(intercept + x_i . beta).
struct OutcomeRateModel {
  double intercept = 0.0;
  std::vector<std::pair<std::size_t, double>> coefficients;
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;

  std::vector<double> rates(const SparseCovariateMatrix& m) const;
};

/// L1-penalized Poisson regression with a log(person_days) offset, fitted
/// by the same coordinate-descent solver as the propensity model. Rows with
/// zero weight are ignored. Throws DegenerateFitError when no events occur.
OutcomeRateModel fit_outcome_rate_model(const SparseCovariateMatrix& m, std::span<const double> events,
                                        std::span<const double> person_days, double lambda,
                                        CoordinateDescentOptions options = {},
                                        std::span<const double> weights = {});

/// Smallest lambda giving the intercept-only rate model.
double outcome_rate_lambda_max(const SparseCovariateMatrix& m, std::span<const double> events,
                               std::span<const double> person_days,
                               std::span<const double> weights = {});

/// Same model with lambda = lambda_ratio * lambda_max of the data.
OutcomeRateModel fit_outcome_rate_model_at_ratio(const SparseCovariateMatrix& m,
                                                 std::span<const double> events,
                                                 std::span<const double> person_days,
                                                 double lambda_ratio,
                                                 CoordinateDescentOptions options = {},
                                                 std::span<const double> weights = {});

/// Synthetic outcome ids live above kSyntheticOutcomeBase:
/// base + parent * 100 + (level index + 1).
inline constexpr ConditionId kSyntheticOutcomeBase = 1'000'000'000;
ConditionId synthetic_outcome_id(ConditionId parent, std::size_t level_index);

/// For each subject, draws k ~ Poisson(rate_multiplier * rate_i * t_i) and
/// returns the earliest of k uniform day offsets in [0, t_i), or nullopt
/// when k = 0.
std::vector<std::optional<int>> draw_injected_offsets(std::span<const double> rates,
                                                      std::span<const RiskWindow> windows,
                                                      double rate_multiplier, std::uint64_t seed);

struct InjectionResult {
  ControlDefinition definition;
  /// Synthetic first-event day per target subject (in pair order).
  std::vector<std::optional<Day>> target_first_event;
  /// Original first on/after-index event day per comparator subject.
  std::vector<std::optional<Day>> comparator_first_event;
  std::vector<int> injected;  // 1 where the injected day became the first event
  std::size_t injected_subjects = 0;

  /// Condition-occurrence-shaped rows of the synthetic outcome.
  std::vector<ConditionOccurrence> occurrences(const CohortPair& pair) const;
};

/// Injects extra outcome occurrences into the target arm so that target vs
/// comparator has hazard ratio target_hr. `target_rates` and
/// `target_windows` are per target subject. Throws ConfigError when
/// target_hr <= 1 or sizes mismatch.
InjectionResult inject_positive_control(const PatientDatabase& db, const CohortPair& pair,
                                        ConditionId negative_outcome,
                                        std::span<const double> target_rates,
                                        std::span<const RiskWindow> target_windows, double target_hr,
                                        ConditionId synthetic_id, std::uint64_t seed);

}  // namespace obsgrid
