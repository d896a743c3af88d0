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
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "obsgrid/config.hpp"
#include "obsgrid/controls.hpp"
#include "obsgrid/database.hpp"
#include "obsgrid/store.hpp"

namespace obsgrid {

struct AttritionRow {
  std::string database;
  DrugId target = 0;
  DrugId comparator = 0;
  ConditionId outcome = 0;
  std::string rule;
  std::size_t target_removed = 0;
  std::size_t comparator_removed = 0;
  std::size_t target_remaining = 0;
  std::size_t comparator_remaining = 0;
};

struct BalanceRow {
  std::string database;
  DrugId target = 0;
  DrugId comparator = 0;
  ConditionId outcome = 0;
  std::int64_t covariate_id = 0;
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct ControlRow {
  ConditionId outcome_id = 0;
  ControlKind kind = ControlKind::negative;
  double true_hr = 1.0;
  std::optional<ConditionId> parent;
  friend auto operator<=>(const ControlRow&, const ControlRow&) = default;
};

struct EligibilityRow {
  ContextKey context;
  ConditionId negative = 0;
  std::size_t outcome_persons = 0;
  std::size_t target_outcome_persons = 0;
  bool model_ok = false;
  bool inject_ok = false;
};

struct SyntheticOccurrenceRow {
  ContextKey context;
  ConditionOccurrence occurrence;
};

struct PsArtifact {
  std::string database;
  DrugId target = 0;
  DrugId comparator = 0;
  double lambda = 0.0;
  double intercept = 0.0;
  bool converged = false;
  std::vector<std::pair<std::int64_t, double>> coefficients;  // covariate id -> value
  std::vector<std::size_t> target_histogram;
  std::vector<std::size_t> comparator_histogram;
  double equipoise_share = 0.0;
};

struct GridResult {
  ResultStore store;
  std::vector<AttritionRow> attrition;
  std::vector<BalanceRow> balance;
  std::vector<ControlRow> controls;
  std::vector<EligibilityRow> eligibility;
  std::vector<SyntheticOccurrenceRow> synthetic_outcomes;
  std::vector<PsArtifact> ps_artifacts;
};

struct NamedDatabase {
  std::string name;
  const PatientDatabase* database = nullptr;
};

/// Materializes every configured database (simulated or read from disk).
std::vector<std::pair<std::string, PatientDatabase>> load_databases(const RunConfig& config,
                                                                   std::size_t workers = 1);

/// Runs every ordered (target, comparator) pair in every database through
/// cohorts, propensity stratification, Cox estimation and control-based
/// calibration. Each (database, pair) is one task on a pool of
/// config.workers threads; failures are recorded in the store.
GridResult run_grid(const RunConfig& config, const std::vector<NamedDatabase>& databases);
GridResult run_grid(const RunConfig& config);

/// Writes the store plus attrition.csv, balance.csv, controls.csv,
/// control_eligibility.csv and the optional synthetic-outcome and PS files.
void write_grid_result(const GridResult& result, const std::filesystem::path& dir);

namespace grid_files {
inline constexpr const char* kAttrition = "attrition.csv";
inline constexpr const char* kBalance = "balance.csv";
inline constexpr const char* kControls = "controls.csv";
inline constexpr const char* kEligibility = "control_eligibility.csv";
inline constexpr const char* kSyntheticOutcomes = "synthetic_condition_occurrence.csv";
inline constexpr const char* kPsModels = "ps_models.csv";
inline constexpr const char* kPsCoefficients = "ps_coefficients.csv";
inline constexpr const char* kPsHistograms = "ps_histograms.csv";
}  // namespace grid_files

}  // namespace obsgrid
