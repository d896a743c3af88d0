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
#include <optional>
#include <string>
#include <vector>

#include "obsgrid/calibration.hpp"
#include "obsgrid/cohorts.hpp"
#include "obsgrid/psmodel.hpp"
#include "obsgrid/synth.hpp"

namespace obsgrid {

struct DatabaseSpec {
  std::string name;
  std::optional<SimConfig> simulate;
  std::optional<std::filesystem::path> path;  // directory written by write_database
};

struct AnalysisSpec {
  std::string name;
  TimeAtRiskPolicy policy;
};

struct ControlSettings {
  std::size_t min_model = 100;
  std::size_t min_inject = 25;
  /// Outcome-rate model penalty as a fraction of its lambda_max.
  double outcome_model_lambda_ratio = 0.01;
};

struct RunConfig {
  std::vector<DatabaseSpec> databases;
  std::vector<DrugId> treatments;
  std::vector<ConditionId> outcomes;
  std::vector<ConditionId> negative_controls;
  std::vector<double> positive_control_hrs{1.5, 2.0, 4.0};
  std::vector<AnalysisSpec> analyses;
  CohortCriteria criteria;
  std::size_t min_arm_size = 2500;
  int lookback_days = 365;
  std::size_t min_covariate_nonzero = 100;
  PropensityOptions ps;
  ErrorModelOptions calibration;
  ControlSettings controls;
  std::uint64_t rng_seed = 1;
  std::size_t workers = 1;
  bool write_synthetic_outcomes = false;
  bool emit_ps_artifacts = false;

  /// Throws ConfigError on violated invariants (fewer than 2 treatments, no
  /// outcomes, duplicate names or ids, invalid nested settings).
  void validate() const;
};

/// JSON keys mirror the SimConfig field names; true_log_hr is a list of
/// {"treatment", "outcome", "log_hr"} objects. Unknown keys are rejected.
SimConfig parse_sim_config(const std::string& json_text);
SimConfig load_sim_config(const std::filesystem::path& file);

/// Relative database paths and roster files resolve against base_dir.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);

/// Reads negative-control ids from a roster file with columns
/// outcome_id, kind, true_hr, parent. Positive rows are validated and skipped
/// because positive controls are always synthesized.
std::vector<ConditionId> read_control_roster(const std::filesystem::path& file,
                                             const std::vector<double>& positive_hrs);

}  // namespace obsgrid
