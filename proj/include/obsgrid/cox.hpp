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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace obsgrid {

struct SurvivalRecord {
  int follow_up_days = 0;
  bool event = false;
  bool treated = false;
  int stratum = 0;
};

struct ArmCounts {
  std::size_t target_subjects = 0;
  std::size_t comparator_subjects = 0;
  std::size_t target_events = 0;
  std::size_t comparator_events = 0;
};

struct EffectEstimate {
  double log_hr = 0.0;
  double se_log_hr = 0.0;
  double hr = 1.0;
  std::pair<double, double> ci95{0.0, 0.0};
  double p = 1.0;
  std::optional<std::pair<double, double>> calibrated_ci95;
  std::optional<double> calibrated_p;
  ArmCounts counts;
  bool estimable = false;
  std::optional<std::string> suppressed_reason;
};

/// Per-event-time risk-set summary of a stratified dataset with a binary
/// covariate; the partial likelihood depends on the data only through it.
struct RiskSetTable {
  struct Row {
    double at_risk_comparator;
    double at_risk_treated;
    double events_comparator;
    double events_treated;
  };
  std::vector<Row> rows;

  static RiskSetTable build(std::span<const SurvivalRecord> data);
  bool informative() const;

  /// Breslow log partial likelihood, score and observed information at beta.
  double log_likelihood(double beta) const;
  double score(double beta) const;
  double information(double beta) const;
};

struct CoxOptions {
  double score_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  int max_iterations = 50;
  double divergence_bound = 20.0;  // |beta| beyond this is treated as monotone likelihood
};

/// Stratified Cox model with one treatment coefficient shared across strata
/// and a free baseline hazard per stratum (Breslow ties). Newton's method
/// from beta = 0. Non-estimable data are flagged, never thrown.
EffectEstimate fit_stratified_cox(std::span<const SurvivalRecord> data, CoxOptions options = {});

ArmCounts count_arms(std::span<const SurvivalRecord> data);

/// exp(log_hr -/+ z_{1-alpha/2} * se).
std::pair<double, double> wald_interval(double log_hr, double se, double alpha = 0.05);

/// Two-sided Wald p-value.
double wald_p_value(double log_hr, double se);

}  // namespace obsgrid
