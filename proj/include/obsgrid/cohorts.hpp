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
#include <string>
#include <vector>

#include "obsgrid/database.hpp"
#include "obsgrid/types.hpp"

namespace obsgrid {

struct CohortCriteria {
  int washout_days = 365;
  /// When set, subjects need this condition on or before index.
  std::optional<ConditionId> indication_condition;
  /// Any occurrence on or before index excludes the subject.
  std::vector<ConditionId> exclusion_conditions;
  bool exclude_prior_outcome = true;
  bool exclude_both_exposed = true;
  bool restrict_calendar_overlap = true;

  void validate() const;
};

struct Subject {
  PersonId person_id = 0;
  std::size_t person_index = 0;  // row in PatientDatabase::persons()
  Day index_day = 0;

  friend bool operator==(const Subject&, const Subject&) = default;
};

struct AttritionStep {
  std::string rule;
  std::size_t target_removed = 0;
  std::size_t comparator_removed = 0;
};

/// Rule names recorded in CohortPair::attrition, in application order.
namespace attrition_rules {
inline constexpr const char* kWashout = "insufficient_washout";
inline constexpr const char* kIndication = "missing_indication";
inline constexpr const char* kExclusionCondition = "exclusion_condition";
inline constexpr const char* kBothSameDay = "both_exposed_same_day";
inline constexpr const char* kPriorOtherDrug = "prior_other_drug";
inline constexpr const char* kCalendarOverlap = "outside_calendar_overlap";
inline constexpr const char* kPriorOutcome = "prior_outcome";
}  // namespace attrition_rules

struct CohortPair {
  DrugId target = 0;
  DrugId comparator = 0;
  std::optional<ConditionId> outcome;
  std::vector<Subject> target_subjects;      // ordered by person_id
  std::vector<Subject> comparator_subjects;  // ordered by person_id
  std::size_t initial_target = 0;            // first-ever users before any rule
  std::size_t initial_comparator = 0;
  std::vector<AttritionStep> attrition;

  std::size_t size() const { return target_subjects.size() + comparator_subjects.size(); }
};

/// New-user cohorts for target vs comparator. With an outcome, subjects with
/// that outcome strictly before index are removed as the final rule.
/// Throws ConfigError for unknown ids or target == comparator.
CohortPair build_cohort_pair(const PatientDatabase& db, DrugId target, DrugId comparator,
                             std::optional<ConditionId> outcome, const CohortCriteria& criteria);

/// Applies the prior-outcome rule to an outcome-free pair. When
/// criteria.exclude_prior_outcome is off the rule is recorded with zero removals.
CohortPair restrict_to_outcome(const PatientDatabase& db, const CohortPair& base,
                               ConditionId outcome, const CohortCriteria& criteria);

enum class TimeAtRiskKind { on_treatment, intent_to_treat };

struct TimeAtRiskPolicy {
  TimeAtRiskKind kind = TimeAtRiskKind::on_treatment;
  int gap_days = 30;

  void validate() const;
};

/// Risk window [index, end], end inclusive; length() is the person-time in days.
struct RiskWindow {
  Day start = 0;
  Day end = 0;
  int length() const { return end - start; }
};

struct FollowUp {
  int follow_up_days = 0;
  bool event = false;

  friend bool operator==(const FollowUp&, const FollowUp&) = default;
};

/// End of the exposure era that starts at `start`: same-drug exposures whose
/// start lies at most gap_days after the running era end are merged.
Day exposure_era_end(std::span<const DrugExposure> exposures, Day start, int gap_days);

RiskWindow risk_window(const PatientDatabase& db, const Subject& subject, DrugId drug,
                       const TimeAtRiskPolicy& policy);

/// First occurrence of `outcome` on or after `from`, if any.
std::optional<Day> first_outcome_from(const PatientDatabase& db, std::size_t person,
                                      ConditionId outcome, Day from);

FollowUp follow_up(const RiskWindow& window, std::optional<Day> first_outcome_day);

FollowUp time_at_risk(const PatientDatabase& db, const Subject& subject, DrugId drug,
                      ConditionId outcome, const TimeAtRiskPolicy& policy);

}  // namespace obsgrid
