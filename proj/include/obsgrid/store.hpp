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

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "obsgrid/calibration.hpp"
#include "obsgrid/cox.hpp"
#include "obsgrid/types.hpp"

namespace obsgrid {

struct ResultKey {
  std::string database;
  std::string analysis;
  DrugId target = 0;
  DrugId comparator = 0;
  ConditionId outcome = 0;
  friend auto operator<=>(const ResultKey&, const ResultKey&) = default;
  friend bool operator==(const ResultKey&, const ResultKey&) = default;
};

/// Calibration context shared by all estimates of one comparison.
struct ContextKey {
  std::string database;
  std::string analysis;
  DrugId target = 0;
  DrugId comparator = 0;
  friend auto operator<=>(const ContextKey&, const ContextKey&) = default;
  friend bool operator==(const ContextKey&, const ContextKey&) = default;
};

ContextKey context_of(const ResultKey& key);

struct ResultRecord {
  ResultKey key;
  bool is_control = false;
  double true_hr = 0.0;  // NaN when unknown
  EffectEstimate estimate;
  double max_smd_after = 0.0;    // NaN when not computed
  double equipoise_share = 0.0;  // NaN when not computed
};

struct ErrorModelRecord {
  ContextKey context;
  std::size_t controls_available = 0;
  std::optional<SystematicErrorModel> model;
};

/// Parent negative control of a control outcome id (itself for negatives).
ConditionId control_parent(ConditionId outcome);

/// Results keyed by (database, analysis, target, comparator, outcome).
class ResultStore {
 public:
  static constexpr int kSchemaVersion = 1;

  /// Throws ConfigError when the key is already present.
  void append(ResultRecord record);
  void set_error_model(ErrorModelRecord record);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  /// Ordered by key.
  std::vector<const ResultRecord*> records() const;
  const ResultRecord* find(const ResultKey& key) const;
  const std::map<ContextKey, ErrorModelRecord>& error_models() const { return error_models_; }

  std::vector<std::string> databases() const;
  std::vector<std::string> analyses() const;

  /// Control estimates of one context, usable for error-model fitting.
  std::vector<ControlEstimate> control_estimates(const ContextKey& context) const;
  std::vector<ContextKey> contexts() const;

 private:
  std::map<ResultKey, ResultRecord> records_;
  std::map<ContextKey, ErrorModelRecord> error_models_;
};

namespace store_files {
inline constexpr const char* kResults = "results.csv";
inline constexpr const char* kManifest = "store_manifest.json";
inline constexpr const char* kErrorModels = "error_models.csv";
}  // namespace store_files

/// Column names of results.csv in order.
const std::vector<std::string>& result_columns();

/// Writes results.csv, error_models.csv and the manifest. Output depends only
/// on the store contents.
void write_store(const ResultStore& store, const std::filesystem::path& dir);
/// Throws IoError for missing files or a schema-version mismatch.
ResultStore read_store(const std::filesystem::path& dir);

}  // namespace obsgrid
