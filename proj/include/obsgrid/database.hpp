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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "obsgrid/types.hpp"

namespace obsgrid {

struct Person {
  PersonId person_id = 0;
  int birth_year = 0;
  int sex = 0;  // 0 = male, 1 = female

  friend bool operator==(const Person&, const Person&) = default;
};

struct ObservationPeriod {
  PersonId person_id = 0;
  Day start_day = 0;
  Day end_day = 0;  // inclusive

  friend bool operator==(const ObservationPeriod&, const ObservationPeriod&) = default;
};

struct DrugExposure {
  PersonId person_id = 0;
  DrugId drug_id = 0;
  Day start_day = 0;
  Day end_day = 0;  // inclusive

  friend bool operator==(const DrugExposure&, const DrugExposure&) = default;
};

struct ConditionOccurrence {
  PersonId person_id = 0;
  ConditionId condition_id = 0;
  Day day = 0;

  friend bool operator==(const ConditionOccurrence&, const ConditionOccurrence&) = default;
};

/// True log hazard ratio of each (treatment, outcome) pair, relative to no exposure.
using GroundTruth = std::map<std::pair<DrugId, ConditionId>, double>;

struct DrugUsageRange {
  Day first_start = 0;
  Day last_start = 0;
};

/// Immutable OMOP-lite longitudinal database.
///
/// Tables are kept sorted: persons by id, observation periods by
/// (person, start), exposures by (person, drug, start, end) and conditions
/// by (person, condition, day). Per-person slices are exposed through
/// index-based accessors so cohort and covariate code never search.
class PatientDatabase {
 public:
  PatientDatabase() = default;

  /// Sorts the tables, builds person indexes and validates every invariant.
  /// Throws DataError when an invariant is violated.
  PatientDatabase(std::vector<Person> persons, std::vector<ObservationPeriod> observation_periods,
                  std::vector<DrugExposure> drug_exposures,
                  std::vector<ConditionOccurrence> condition_occurrences,
                  std::optional<GroundTruth> ground_truth = std::nullopt);

  std::span<const Person> persons() const { return persons_; }
  std::span<const ObservationPeriod> observation_periods() const { return observation_periods_; }
  std::span<const DrugExposure> drug_exposures() const { return drug_exposures_; }
  std::span<const ConditionOccurrence> condition_occurrences() const {
    return condition_occurrences_;
  }
  const std::optional<GroundTruth>& ground_truth() const { return ground_truth_; }

  std::size_t person_count() const { return persons_.size(); }
  std::optional<std::size_t> person_index(PersonId id) const;

  std::span<const ObservationPeriod> observation_periods_of(std::size_t person) const;
  std::span<const DrugExposure> drug_exposures_of(std::size_t person) const;
  std::span<const ConditionOccurrence> conditions_of(std::size_t person) const;

  /// Exposures of one drug for one person, ordered by start day.
  std::span<const DrugExposure> drug_exposures_of(std::size_t person, DrugId drug) const;
  /// Occurrences of one condition for one person, ordered by day.
  std::span<const ConditionOccurrence> conditions_of(std::size_t person,
                                                     ConditionId condition) const;

  /// Observation period containing `day`, if any.
  const ObservationPeriod* observation_period_at(std::size_t person, Day day) const;

  bool has_drug(DrugId drug) const { return drug_ranges_.contains(drug); }
  bool has_condition(ConditionId condition) const;
  /// Drug-level first and last exposure start days. Throws ConfigError for unknown drugs.
  DrugUsageRange drug_usage(DrugId drug) const;

  std::span<const ConditionId> condition_ids() const { return condition_ids_; }
  std::vector<DrugId> drug_ids() const;

  friend bool operator==(const PatientDatabase& a, const PatientDatabase& b);

 private:
  void build_index();
  void validate() const;

  std::vector<Person> persons_;
  std::vector<ObservationPeriod> observation_periods_;
  std::vector<DrugExposure> drug_exposures_;
  std::vector<ConditionOccurrence> condition_occurrences_;
  std::optional<GroundTruth> ground_truth_;

  // offsets_[i]..offsets_[i+1] delimit person i's rows in each table
  std::vector<std::size_t> period_offsets_;
  std::vector<std::size_t> drug_offsets_;
  std::vector<std::size_t> condition_offsets_;
  std::map<DrugId, DrugUsageRange> drug_ranges_;
  std::vector<ConditionId> condition_ids_;
};

/// File names and header rows of the delimited-text form of a database.
namespace table_files {
inline constexpr const char* kPersons = "person.csv";
inline constexpr const char* kObservationPeriods = "observation_period.csv";
inline constexpr const char* kDrugExposures = "drug_exposure.csv";
inline constexpr const char* kConditionOccurrences = "condition_occurrence.csv";
inline constexpr const char* kGroundTruth = "ground_truth.csv";
inline constexpr const char* kGroundTruthPairs = "ground_truth_pairs.csv";
}  // namespace table_files

/// Writes the four tables (and ground truth when present) into `dir`.
void write_database(const PatientDatabase& db, const std::filesystem::path& dir);

/// Reads a directory written by write_database. Ground truth is optional.
PatientDatabase read_database(const std::filesystem::path& dir);

}  // namespace obsgrid
