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

#include "obsgrid/cohorts.hpp"

#include <algorithm>
#include <string>

#include "obsgrid/errors.hpp"

namespace obsgrid {

void CohortCriteria::validate() const {
  if (washout_days < 0) throw ConfigError("washout_days must be >= 0");
}

void TimeAtRiskPolicy::validate() const {
  if (gap_days < 0) throw ConfigError("gap_days must be >= 0");
}

namespace {

struct Candidate {
  Subject subject;
  bool removed = false;
};

std::vector<Candidate> first_users(const PatientDatabase& db, DrugId drug) {
  std::vector<Candidate> out;
  const auto persons = db.persons();
  for (std::size_t p = 0; p < persons.size(); ++p) {
    auto ex = db.drug_exposures_of(p, drug);
    if (ex.empty()) continue;
    out.push_back({{persons[p].person_id, p, ex.front().start_day}, false});
  }
  return out;
}

bool has_condition_on_or_before(const PatientDatabase& db, std::size_t person, ConditionId c,
                                Day day) {
  auto occ = db.conditions_of(person, c);
  return !occ.empty() && occ.front().day <= day;
}

bool has_condition_before(const PatientDatabase& db, std::size_t person, ConditionId c, Day day) {
  auto occ = db.conditions_of(person, c);
  return !occ.empty() && occ.front().day < day;
}

template <typename Pred>
std::size_t remove_if_alive(std::vector<Candidate>& arm, Pred pred) {
  std::size_t n = 0;
  for (auto& c : arm) {
    if (!c.removed && pred(c.subject)) {
      c.removed = true;
      ++n;
    }
  }
  return n;
}

template <typename Pred>
void apply_rule(CohortPair& pair, std::vector<Candidate>& target, std::vector<Candidate>& comparator,
                const char* rule, Pred pred) {
  AttritionStep step{rule, remove_if_alive(target, pred), remove_if_alive(comparator, pred)};
  pair.attrition.push_back(step);
}

std::vector<Subject> survivors(const std::vector<Candidate>& arm) {
  std::vector<Subject> out;
  for (const auto& c : arm)
    if (!c.removed) out.push_back(c.subject);
  return out;
}

void check_condition(const PatientDatabase& db, ConditionId c) {
  if (!db.has_condition(c)) throw ConfigError("unknown condition id " + std::to_string(c));
}

}  // namespace

CohortPair build_cohort_pair(const PatientDatabase& db, DrugId target, DrugId comparator,
                             std::optional<ConditionId> outcome, const CohortCriteria& criteria) {
  criteria.validate();
  if (target == comparator) throw ConfigError("target and comparator must differ");
  if (!db.has_drug(target)) throw ConfigError("unknown drug id " + std::to_string(target));
  if (!db.has_drug(comparator)) throw ConfigError("unknown drug id " + std::to_string(comparator));
  if (criteria.indication_condition) check_condition(db, *criteria.indication_condition);
  for (auto c : criteria.exclusion_conditions) check_condition(db, c);
  if (outcome) check_condition(db, *outcome);

  CohortPair pair;
  pair.target = target;
  pair.comparator = comparator;
  auto t_arm = first_users(db, target);
  auto c_arm = first_users(db, comparator);
  pair.initial_target = t_arm.size();
  pair.initial_comparator = c_arm.size();

  apply_rule(pair, t_arm, c_arm, attrition_rules::kWashout, [&](const Subject& s) {
    const auto* op = db.observation_period_at(s.person_index, s.index_day);
    return op == nullptr || s.index_day - op->start_day < criteria.washout_days;
  });
  if (criteria.indication_condition) {
    const auto ind = *criteria.indication_condition;
    apply_rule(pair, t_arm, c_arm, attrition_rules::kIndication, [&](const Subject& s) {
      return !has_condition_on_or_before(db, s.person_index, ind, s.index_day);
    });
  }
  if (!criteria.exclusion_conditions.empty()) {
    apply_rule(pair, t_arm, c_arm, attrition_rules::kExclusionCondition, [&](const Subject& s) {
      for (auto c : criteria.exclusion_conditions)
        if (has_condition_on_or_before(db, s.person_index, c, s.index_day)) return true;
      return false;
    });
  }

  // Exposure to the other drug on or before index; a shared first-use day
  // removes the person from both arms.
  auto other_start = [&](const Subject& s, DrugId other) -> std::optional<Day> {
    auto ex = db.drug_exposures_of(s.person_index, other);
    if (ex.empty()) return std::nullopt;
    return ex.front().start_day;
  };
  if (criteria.exclude_both_exposed) {
    apply_rule(pair, t_arm, c_arm, attrition_rules::kBothSameDay, [&](const Subject& s) {
      auto t = other_start(s, target);
      auto c = other_start(s, comparator);
      return t && c && *t == *c;
    });
  }
  {
    AttritionStep step{attrition_rules::kPriorOtherDrug, 0, 0};
    step.target_removed = remove_if_alive(t_arm, [&](const Subject& s) {
      auto o = other_start(s, comparator);
      return o && *o <= s.index_day;
    });
    step.comparator_removed = remove_if_alive(c_arm, [&](const Subject& s) {
      auto o = other_start(s, target);
      return o && *o <= s.index_day;
    });
    pair.attrition.push_back(step);
  }
  if (criteria.restrict_calendar_overlap) {
    const auto tr = db.drug_usage(target);
    const auto cr = db.drug_usage(comparator);
    const Day lo = std::max(tr.first_start, cr.first_start);
    const Day hi = std::min(tr.last_start, cr.last_start);
    apply_rule(pair, t_arm, c_arm, attrition_rules::kCalendarOverlap,
               [&](const Subject& s) { return s.index_day < lo || s.index_day > hi; });
  }
  pair.target_subjects = survivors(t_arm);
  pair.comparator_subjects = survivors(c_arm);
  if (outcome) return restrict_to_outcome(db, pair, *outcome, criteria);
  return pair;
}

CohortPair restrict_to_outcome(const PatientDatabase& db, const CohortPair& base,
                               ConditionId outcome, const CohortCriteria& criteria) {
  if (base.outcome) throw ConfigError("cohort pair is already restricted to an outcome");
  check_condition(db, outcome);
  CohortPair pair = base;
  pair.outcome = outcome;
  AttritionStep step{attrition_rules::kPriorOutcome, 0, 0};
  if (criteria.exclude_prior_outcome) {
    auto filter = [&](std::vector<Subject>& arm) {
      const auto before = arm.size();
      std::erase_if(arm, [&](const Subject& s) {
        return has_condition_before(db, s.person_index, outcome, s.index_day);
      });
      return before - arm.size();
    };
    step.target_removed = filter(pair.target_subjects);
    step.comparator_removed = filter(pair.comparator_subjects);
  }
  pair.attrition.push_back(step);
  return pair;
}

Day exposure_era_end(std::span<const DrugExposure> exposures, Day start, int gap_days) {
  Day end = start;
  bool open = false;
  for (const auto& e : exposures) {
    if (!open) {
      if (e.start_day < start) continue;
      open = true;
      end = e.end_day;
      continue;
    }
    if (e.start_day - end > gap_days) break;
    end = std::max(end, e.end_day);
  }
  return end;
}

RiskWindow risk_window(const PatientDatabase& db, const Subject& subject, DrugId drug,
                       const TimeAtRiskPolicy& policy) {
  const auto* op = db.observation_period_at(subject.person_index, subject.index_day);
  if (op == nullptr) throw DataError("index day outside observation");
  RiskWindow w{subject.index_day, op->end_day};
  if (policy.kind == TimeAtRiskKind::on_treatment) {
    const Day era_end =
        exposure_era_end(db.drug_exposures_of(subject.person_index, drug), subject.index_day,
                         policy.gap_days);
    w.end = std::min(w.end, era_end);
  }
  return w;
}

std::optional<Day> first_outcome_from(const PatientDatabase& db, std::size_t person,
                                      ConditionId outcome, Day from) {
  for (const auto& c : db.conditions_of(person, outcome))
    if (c.day >= from) return c.day;
  return std::nullopt;
}

FollowUp follow_up(const RiskWindow& window, std::optional<Day> first_outcome_day) {
  if (first_outcome_day && *first_outcome_day >= window.start && *first_outcome_day <= window.end)
    return {*first_outcome_day - window.start, true};
  return {window.length(), false};
}

FollowUp time_at_risk(const PatientDatabase& db, const Subject& subject, DrugId drug,
                      ConditionId outcome, const TimeAtRiskPolicy& policy) {
  if (!db.has_drug(drug)) throw ConfigError("unknown drug id " + std::to_string(drug));
  if (!db.has_condition(outcome)) throw ConfigError("unknown condition id " + std::to_string(outcome));
  return follow_up(risk_window(db, subject, drug, policy),
                   first_outcome_from(db, subject.person_index, outcome, subject.index_day));
}

}  // namespace obsgrid
