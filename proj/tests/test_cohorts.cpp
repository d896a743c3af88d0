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

#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "obsgrid/cohorts.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/synth.hpp"
#include "support.hpp"

using namespace obsgrid;

namespace {

std::set<PersonId> ids_of(const std::vector<Subject>& arm) {
  std::set<PersonId> out;
  for (const auto& s : arm) out.insert(s.person_id);
  return out;
}

std::size_t removed(const CohortPair& pair, const std::string& rule, bool target) {
  for (const auto& s : pair.attrition)
    if (s.rule == rule) return target ? s.target_removed : s.comparator_removed;
  return 0;
}

// Independent re-scan of the raw tables, without the per-person indexes.
struct ScanOracle {
  std::map<PersonId, std::vector<ObservationPeriod>> periods;
  std::map<std::pair<PersonId, DrugId>, Day> first_use;
  std::map<std::pair<PersonId, ConditionId>, Day> first_condition;
  std::map<DrugId, std::pair<Day, Day>> usage;

  explicit ScanOracle(const PatientDatabase& db) {
    for (const auto& o : db.observation_periods()) periods[o.person_id].push_back(o);
    for (const auto& e : db.drug_exposures()) {
      auto [it, fresh] = first_use.try_emplace({e.person_id, e.drug_id}, e.start_day);
      if (!fresh) it->second = std::min(it->second, e.start_day);
      auto [u, ufresh] = usage.try_emplace(e.drug_id, e.start_day, e.start_day);
      if (!ufresh) {
        u->second.first = std::min(u->second.first, e.start_day);
        u->second.second = std::max(u->second.second, e.start_day);
      }
    }
    for (const auto& c : db.condition_occurrences()) {
      auto [it, fresh] = first_condition.try_emplace({c.person_id, c.condition_id}, c.day);
      if (!fresh) it->second = std::min(it->second, c.day);
    }
  }

  std::set<PersonId> arm(DrugId drug, DrugId other, std::optional<ConditionId> outcome,
                         int washout) const {
    const Day lo = std::max(usage.at(drug).first, usage.at(other).first);
    const Day hi = std::min(usage.at(drug).second, usage.at(other).second);
    std::set<PersonId> out;
    for (const auto& [key, index] : first_use) {
      if (key.second != drug) continue;
      const PersonId p = key.first;
      bool washed = false;
      for (const auto& o : periods.at(p))
        if (o.start_day <= index && index <= o.end_day && index - o.start_day >= washout) washed = true;
      if (!washed) continue;
      auto it = first_use.find({p, other});
      if (it != first_use.end() && it->second <= index) continue;
      if (index < lo || index > hi) continue;
      if (outcome) {
        auto oc = first_condition.find({p, *outcome});
        if (oc != first_condition.end() && oc->second < index) continue;
      }
      out.insert(p);
    }
    return out;
  }
};

CohortPair simulated_pair(const PatientDatabase& db, std::optional<ConditionId> outcome = {}) {
  return build_cohort_pair(db, 1, 2, outcome, CohortCriteria{});
}

SimConfig cohort_sim() {
  SimConfig c;
  c.n_persons = 10000;
  c.n_treatments = 2;
  c.n_outcomes = 2;
  c.n_baseline_covariates = 6;
  c.baseline_hazard_per_day = 2e-4;
  c.rng_seed = 7;
  return c;
}

}  // namespace

TEST_CASE("prior outcome removes the subject and is attributed to its rule") {
  testing::DbBuilder b;
  b.person(1, 0, 1000).drug(1, 1, 500, 600).condition(1, 5, 490);
  b.person(2, 0, 1000).drug(2, 2, 500, 600);
  b.person(3, 0, 1000).drug(3, 1, 520, 600);
  const auto db = b.build();
  const auto pair = build_cohort_pair(db, 1, 2, ConditionId{5}, CohortCriteria{});
  CHECK_FALSE(ids_of(pair.target_subjects).contains(1));
  CHECK_FALSE(ids_of(pair.comparator_subjects).contains(1));
  CHECK(removed(pair, attrition_rules::kPriorOutcome, true) == 1);
  CHECK(pair.attrition.back().rule == attrition_rules::kPriorOutcome);
}

TEST_CASE("short prior observation fails the washout") {
  testing::DbBuilder b;
  b.person(1, 300, 1000).drug(1, 1, 500, 600);  // 200 days before index
  b.person(2, 0, 1000).drug(2, 2, 500, 600);
  const auto pair = build_cohort_pair(b.build(), 1, 2, std::nullopt, CohortCriteria{});
  CHECK(pair.target_subjects.empty());
  CHECK(removed(pair, attrition_rules::kWashout, true) == 1);
}

TEST_CASE("same-day dual initiators leave both arms; later use of the other drug does not") {
  testing::DbBuilder b;
  b.person(1, 0, 1000).drug(1, 1, 400, 450).drug(1, 2, 400, 450);
  b.person(2, 0, 1000).drug(2, 1, 400, 450).drug(2, 2, 600, 650);
  b.person(3, 0, 1000).drug(3, 2, 420, 450);
  CohortCriteria crit;
  crit.restrict_calendar_overlap = false;
  const auto pair = build_cohort_pair(b.build(), 1, 2, std::nullopt, crit);
  CHECK(ids_of(pair.target_subjects) == std::set<PersonId>{2});
  CHECK(ids_of(pair.comparator_subjects) == std::set<PersonId>{3});
  CHECK(removed(pair, attrition_rules::kBothSameDay, true) == 1);
  CHECK(removed(pair, attrition_rules::kBothSameDay, false) == 1);
  CHECK(removed(pair, attrition_rules::kPriorOtherDrug, false) == 1);
}

TEST_CASE("indication and exclusion conditions") {
  testing::DbBuilder b;
  b.person(1, 0, 1000).drug(1, 1, 400, 450).condition(1, 7, 400);
  b.person(2, 0, 1000).drug(2, 1, 400, 450);
  b.person(3, 0, 1000).drug(3, 2, 420, 450).condition(3, 7, 10).condition(3, 8, 100);
  b.person(4, 0, 1000).drug(4, 2, 420, 450).condition(4, 7, 10);
  CohortCriteria crit;
  crit.indication_condition = 7;
  crit.exclusion_conditions = {8};
  crit.restrict_calendar_overlap = false;
  const auto pair = build_cohort_pair(b.build(), 1, 2, std::nullopt, crit);
  CHECK(ids_of(pair.target_subjects) == std::set<PersonId>{1});
  CHECK(ids_of(pair.comparator_subjects) == std::set<PersonId>{4});
  CHECK(removed(pair, attrition_rules::kIndication, true) == 1);
  CHECK(removed(pair, attrition_rules::kExclusionCondition, false) == 1);
}

TEST_CASE("unknown ids and identical drugs are configuration errors") {
  testing::DbBuilder b;
  b.person(1, 0, 1000).drug(1, 1, 400, 450).drug(1, 2, 600, 650).condition(1, 3, 5);
  const auto db = b.build();
  CHECK_THROWS_AS(build_cohort_pair(db, 1, 1, std::nullopt, {}), ConfigError);
  CHECK_THROWS_AS(build_cohort_pair(db, 1, 9, std::nullopt, {}), ConfigError);
  CHECK_THROWS_AS(build_cohort_pair(db, 1, 2, ConditionId{4}, {}), ConfigError);
  CohortCriteria bad;
  bad.washout_days = -1;
  CHECK_THROWS_AS(build_cohort_pair(db, 1, 2, std::nullopt, bad), ConfigError);
}

TEST_CASE("arm sizes equal a brute-force scan of the raw tables") {
  const auto db = generate_database(cohort_sim());
  const ScanOracle oracle(db);
  const auto pair = simulated_pair(db);
  CHECK(ids_of(pair.target_subjects) == oracle.arm(1, 2, std::nullopt, 365));
  CHECK(ids_of(pair.comparator_subjects) == oracle.arm(2, 1, std::nullopt, 365));
  CHECK(pair.target_subjects.size() > 1000);

  const auto with_outcome = simulated_pair(db, ConditionId{1});
  CHECK(ids_of(with_outcome.target_subjects) == oracle.arm(1, 2, ConditionId{1}, 365));
  CHECK(ids_of(with_outcome.comparator_subjects) == oracle.arm(2, 1, ConditionId{1}, 365));
  CHECK(with_outcome.target_subjects.size() < pair.target_subjects.size());
}

TEST_CASE("restricting a base pair equals building with the outcome") {
  const auto db = generate_database(cohort_sim());
  const auto base = simulated_pair(db);
  const auto direct = simulated_pair(db, ConditionId{2});
  const auto restricted = restrict_to_outcome(db, base, 2, CohortCriteria{});
  CHECK(restricted.target_subjects == direct.target_subjects);
  CHECK(restricted.comparator_subjects == direct.comparator_subjects);
  CHECK(restricted.attrition.size() == direct.attrition.size());
  CHECK_THROWS_AS(restrict_to_outcome(db, direct, 2, CohortCriteria{}), ConfigError);
}

TEST_CASE("cohort invariants on a simulated database") {
  const auto db = generate_database(cohort_sim());
  const auto pair = simulated_pair(db, ConditionId{1});
  SUBCASE("arms are disjoint") {
    const auto t = ids_of(pair.target_subjects);
    for (const auto& s : pair.comparator_subjects) CHECK_FALSE(t.contains(s.person_id));
  }
  SUBCASE("attrition is conserved per arm") {
    std::size_t t = 0, c = 0;
    for (const auto& s : pair.attrition) {
      t += s.target_removed;
      c += s.comparator_removed;
    }
    CHECK(pair.initial_target - t == pair.target_subjects.size());
    CHECK(pair.initial_comparator - c == pair.comparator_subjects.size());
  }
  SUBCASE("intent-to-treat follow-up dominates on-treatment, events lie in the window") {
    const TimeAtRiskPolicy ot{TimeAtRiskKind::on_treatment, 30};
    const TimeAtRiskPolicy itt{TimeAtRiskKind::intent_to_treat, 30};
    auto check_arm = [&](const std::vector<Subject>& arm, DrugId drug) {
      for (const auto& s : arm) {
        const auto a = time_at_risk(db, s, drug, 1, ot);
        const auto b = time_at_risk(db, s, drug, 1, itt);
        CHECK(b.follow_up_days >= a.follow_up_days);
        for (const auto& policy : {ot, itt}) {
          const auto w = risk_window(db, s, drug, policy);
          const auto f = time_at_risk(db, s, drug, 1, policy);
          if (f.event) {
            const Day day = s.index_day + f.follow_up_days;
            CHECK(day >= w.start);
            CHECK(day <= w.end);
          }
          CHECK(f.follow_up_days >= 0);
          CHECK(f.follow_up_days <= w.length());
        }
      }
    };
    check_arm(pair.target_subjects, 1);
    check_arm(pair.comparator_subjects, 2);
  }
}

TEST_CASE("exposure eras merge across short gaps") {
  const std::vector<DrugExposure> merged{{1, 1, 0, 30}, {1, 1, 55, 90}};
  CHECK(exposure_era_end(merged, 0, 30) == 90);
  const std::vector<DrugExposure> split{{1, 1, 0, 30}, {1, 1, 70, 90}};
  CHECK(exposure_era_end(split, 0, 30) == 30);
  CHECK(exposure_era_end(split, 0, 40) == 90);
}

TEST_CASE("hand-traced risk windows") {
  // Index on day 400; days below are index-relative plus 400.
  testing::DbBuilder b;
  b.person(1, 0, 800).drug(1, 1, 400, 430).drug(1, 1, 455, 490).condition(1, 3, 445);
  const auto db = b.build();
  const Subject s{1, 0, 400};
  const TimeAtRiskPolicy ot{TimeAtRiskKind::on_treatment, 30};
  const TimeAtRiskPolicy itt{TimeAtRiskKind::intent_to_treat, 30};
  CHECK(time_at_risk(db, s, 1, 3, ot) == FollowUp{45, true});
  CHECK(risk_window(db, s, 1, ot).end == 490);
  CHECK(time_at_risk(db, s, 1, 3, itt) == FollowUp{45, true});
  CHECK(risk_window(db, s, 1, itt).end == 800);

  // An outcome after the era is censored on treatment but counted under ITT.
  testing::DbBuilder late;
  late.person(1, 0, 800).drug(1, 1, 400, 430).condition(1, 3, 600);
  const auto db2 = late.build();
  CHECK(time_at_risk(db2, s, 1, 3, ot) == FollowUp{30, false});
  CHECK(time_at_risk(db2, s, 1, 3, itt) == FollowUp{200, true});
  CHECK(follow_up({10, 50}, std::nullopt) == FollowUp{40, false});
}
