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
#include <map>
#include <utility>
#include <vector>

#include "obsgrid/database.hpp"
#include "obsgrid/types.hpp"

namespace obsgrid {

/// Generative model of a simulated database.
///
/// Treatments are drug ids 1..n_treatments and outcomes are condition ids
/// 1..n_outcomes. Baseline covariate j (1-based) is recorded before index as
/// a condition (even j) or a non-study drug (odd j) with id
/// kBaselineConceptBase + j. A latent per-person confounder U ~ N(0,1) shifts
/// treatment choice and, scaled by unmeasured_confounder_strength, outcome
/// hazards; it is never written to the tables.
struct SimConfig {
  std::size_t n_persons = 1000;
  std::size_t n_treatments = 2;
  std::size_t n_outcomes = 1;
  std::size_t n_baseline_covariates = 10;
  /// One per baseline covariate; empty means drawn from U(0.05, 0.4).
  std::vector<double> covariate_prevalences;
  double channeling_strength = 1.0;
  double unmeasured_confounder_strength = 0.0;
  /// (treatment, outcome) -> log hazard ratio while exposed; absent pairs are 0.
  std::map<std::pair<DrugId, ConditionId>, double> true_log_hr;
  double baseline_hazard_per_day = 5e-5;
  double mean_treatment_days = 180.0;
  double gap_probability = 0.1;
  double observation_years = 6.0;
  std::uint64_t rng_seed = 1;

  /// SD of the measured-covariate contribution to each outcome's log hazard.
  double outcome_confounding_sd = 0.5;
  /// Chance a person later starts a second, different treatment.
  double switch_probability = 0.05;
  /// Share of persons whose index falls before 365 days of observation.
  double short_washout_fraction = 0.05;
  double mean_follow_up_days = 730.0;

  /// Throws ConfigError when a probability, rate or reference is invalid.
  void validate() const;
};

inline constexpr std::int64_t kBaselineConceptBase = 10000;

/// Deterministic: equal configs give equal databases.
PatientDatabase generate_database(const SimConfig& config);

struct GroundTruthRow {
  DrugId treatment = 0;
  DrugId comparator = 0;
  ConditionId outcome = 0;
  double true_hr = 1.0;
};

/// Every ordered (treatment, comparator, outcome) with
/// true_hr = exp(log_hr[T,O] - log_hr[C,O]). Throws UnsupportedError when
/// the database carries no ground truth.
std::vector<GroundTruthRow> ground_truth_table(const PatientDatabase& db);

}  // namespace obsgrid
