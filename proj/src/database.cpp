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

#include "obsgrid/database.hpp"

#include <algorithm>
#include <string>
#include <tuple>

#include "obsgrid/csv.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/synth.hpp"

namespace obsgrid {

PatientDatabase::PatientDatabase(std::vector<Person> persons,
                                 std::vector<ObservationPeriod> observation_periods,
                                 std::vector<DrugExposure> drug_exposures,
                                 std::vector<ConditionOccurrence> condition_occurrences,
                                 std::optional<GroundTruth> ground_truth)
    : persons_(std::move(persons)),
      observation_periods_(std::move(observation_periods)),
      drug_exposures_(std::move(drug_exposures)),
      condition_occurrences_(std::move(condition_occurrences)),
      ground_truth_(std::move(ground_truth)) {
  std::sort(persons_.begin(), persons_.end(),
            [](const Person& a, const Person& b) { return a.person_id < b.person_id; });
  std::sort(observation_periods_.begin(), observation_periods_.end(),
            [](const ObservationPeriod& a, const ObservationPeriod& b) {
              return std::tie(a.person_id, a.start_day, a.end_day) <
                     std::tie(b.person_id, b.start_day, b.end_day);
            });
  std::sort(drug_exposures_.begin(), drug_exposures_.end(),
            [](const DrugExposure& a, const DrugExposure& b) {
              return std::tie(a.person_id, a.drug_id, a.start_day, a.end_day) <
                     std::tie(b.person_id, b.drug_id, b.start_day, b.end_day);
            });
  std::sort(condition_occurrences_.begin(), condition_occurrences_.end(),
            [](const ConditionOccurrence& a, const ConditionOccurrence& b) {
              return std::tie(a.person_id, a.condition_id, a.day) <
                     std::tie(b.person_id, b.condition_id, b.day);
            });
  build_index();
  validate();
}

namespace {

template <typename Row>
std::vector<std::size_t> person_offsets(std::span<const Person> persons, std::span<const Row> rows,
                                        const char* table) {
  std::vector<std::size_t> offsets(persons.size() + 1, 0);
  std::size_t r = 0;
  for (std::size_t p = 0; p < persons.size(); ++p) {
    offsets[p] = r;
    if (r < rows.size() && rows[r].person_id < persons[p].person_id)
      throw DataError(std::string(table) + ": person_id " + std::to_string(rows[r].person_id) +
                      " not in person table");
    while (r < rows.size() && rows[r].person_id == persons[p].person_id) ++r;
  }
  if (r != rows.size())
    throw DataError(std::string(table) + ": person_id " + std::to_string(rows[r].person_id) +
                    " not in person table");
  offsets[persons.size()] = r;
  return offsets;
}

}  // namespace

void PatientDatabase::build_index() {
  for (std::size_t i = 1; i < persons_.size(); ++i)
    if (persons_[i].person_id == persons_[i - 1].person_id)
      throw DataError("duplicate person_id " + std::to_string(persons_[i].person_id));
  period_offsets_ = person_offsets<ObservationPeriod>(persons_, observation_periods_,
                                                      "observation_period");
  drug_offsets_ = person_offsets<DrugExposure>(persons_, drug_exposures_, "drug_exposure");
  condition_offsets_ = person_offsets<ConditionOccurrence>(persons_, condition_occurrences_,
                                                           "condition_occurrence");
  drug_ranges_.clear();
  for (const auto& e : drug_exposures_) {
    auto [it, inserted] = drug_ranges_.try_emplace(e.drug_id, DrugUsageRange{e.start_day, e.start_day});
    if (!inserted) {
      it->second.first_start = std::min(it->second.first_start, e.start_day);
      it->second.last_start = std::max(it->second.last_start, e.start_day);
    }
  }
  condition_ids_.clear();
  for (const auto& c : condition_occurrences_) condition_ids_.push_back(c.condition_id);
  std::sort(condition_ids_.begin(), condition_ids_.end());
  condition_ids_.erase(std::unique(condition_ids_.begin(), condition_ids_.end()),
                       condition_ids_.end());
}

void PatientDatabase::validate() const {
  for (std::size_t p = 0; p < persons_.size(); ++p) {
    const auto pid = std::to_string(persons_[p].person_id);
    if (persons_[p].sex != 0 && persons_[p].sex != 1)
      throw DataError("person " + pid + ": sex must be 0 or 1");
    auto periods = observation_periods_of(p);
    for (std::size_t k = 0; k < periods.size(); ++k) {
      if (periods[k].start_day < 0 || periods[k].end_day < periods[k].start_day)
        throw DataError("person " + pid + ": invalid observation period");
      if (k > 0 && periods[k].start_day <= periods[k - 1].end_day)
        throw DataError("person " + pid + ": overlapping observation periods");
    }
    for (const auto& e : drug_exposures_of(p)) {
      if (e.end_day < e.start_day) throw DataError("person " + pid + ": exposure ends before start");
      const auto* op = observation_period_at(p, e.start_day);
      if (op == nullptr || e.end_day > op->end_day)
        throw DataError("person " + pid + ": exposure outside observation");
    }
    for (const auto& c : conditions_of(p))
      if (observation_period_at(p, c.day) == nullptr)
        throw DataError("person " + pid + ": condition outside observation");
  }
}

std::optional<std::size_t> PatientDatabase::person_index(PersonId id) const {
  auto it = std::lower_bound(persons_.begin(), persons_.end(), id,
                             [](const Person& p, PersonId v) { return p.person_id < v; });
  if (it == persons_.end() || it->person_id != id) return std::nullopt;
  return static_cast<std::size_t>(it - persons_.begin());
}

std::span<const ObservationPeriod> PatientDatabase::observation_periods_of(std::size_t p) const {
  return std::span(observation_periods_).subspan(period_offsets_[p],
                                                 period_offsets_[p + 1] - period_offsets_[p]);
}

std::span<const DrugExposure> PatientDatabase::drug_exposures_of(std::size_t p) const {
  return std::span(drug_exposures_).subspan(drug_offsets_[p], drug_offsets_[p + 1] - drug_offsets_[p]);
}

std::span<const ConditionOccurrence> PatientDatabase::conditions_of(std::size_t p) const {
  return std::span(condition_occurrences_)
      .subspan(condition_offsets_[p], condition_offsets_[p + 1] - condition_offsets_[p]);
}

std::span<const DrugExposure> PatientDatabase::drug_exposures_of(std::size_t p, DrugId drug) const {
  auto all = drug_exposures_of(p);
  auto lo = std::lower_bound(all.begin(), all.end(), drug,
                             [](const DrugExposure& e, DrugId d) { return e.drug_id < d; });
  auto hi = std::upper_bound(lo, all.end(), drug,
                             [](DrugId d, const DrugExposure& e) { return d < e.drug_id; });
  return {lo, hi};
}

std::span<const ConditionOccurrence> PatientDatabase::conditions_of(std::size_t p,
                                                                    ConditionId condition) const {
  auto all = conditions_of(p);
  auto lo = std::lower_bound(all.begin(), all.end(), condition,
                             [](const ConditionOccurrence& c, ConditionId v) {
                               return c.condition_id < v;
                             });
  auto hi = std::upper_bound(lo, all.end(), condition,
                             [](ConditionId v, const ConditionOccurrence& c) {
                               return v < c.condition_id;
                             });
  return {lo, hi};
}

const ObservationPeriod* PatientDatabase::observation_period_at(std::size_t p, Day day) const {
  for (const auto& op : observation_periods_of(p))
    if (op.start_day <= day && day <= op.end_day) return &op;
  return nullptr;
}

bool PatientDatabase::has_condition(ConditionId condition) const {
  return std::binary_search(condition_ids_.begin(), condition_ids_.end(), condition);
}

DrugUsageRange PatientDatabase::drug_usage(DrugId drug) const {
  auto it = drug_ranges_.find(drug);
  if (it == drug_ranges_.end()) throw ConfigError("unknown drug id " + std::to_string(drug));
  return it->second;
}

std::vector<DrugId> PatientDatabase::drug_ids() const {
  std::vector<DrugId> ids;
  for (const auto& [id, range] : drug_ranges_) ids.push_back(id);
  return ids;
}

bool operator==(const PatientDatabase& a, const PatientDatabase& b) {
  return a.persons_ == b.persons_ && a.observation_periods_ == b.observation_periods_ &&
         a.drug_exposures_ == b.drug_exposures_ &&
         a.condition_occurrences_ == b.condition_occurrences_ && a.ground_truth_ == b.ground_truth_;
}

void write_database(const PatientDatabase& db, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvWriter w(dir / table_files::kPersons, {"person_id", "birth_year", "sex"});
    for (const auto& p : db.persons()) {
      w.field(p.person_id).field(p.birth_year).field(p.sex);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / table_files::kObservationPeriods, {"person_id", "start_day", "end_day"});
    for (const auto& o : db.observation_periods()) {
      w.field(o.person_id).field(o.start_day).field(o.end_day);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / table_files::kDrugExposures, {"person_id", "drug_id", "start_day", "end_day"});
    for (const auto& e : db.drug_exposures()) {
      w.field(e.person_id).field(e.drug_id).field(e.start_day).field(e.end_day);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / table_files::kConditionOccurrences, {"person_id", "condition_id", "day"});
    for (const auto& c : db.condition_occurrences()) {
      w.field(c.person_id).field(c.condition_id).field(c.day);
      w.end_row();
    }
  }
  if (db.ground_truth()) {
    {
      CsvWriter w(dir / table_files::kGroundTruth, {"treatment", "outcome", "true_log_hr"});
      for (const auto& [key, log_hr] : *db.ground_truth()) {
        w.field(key.first).field(key.second).field(log_hr);
        w.end_row();
      }
    }
    CsvWriter w(dir / table_files::kGroundTruthPairs,
                {"treatment", "comparator", "outcome", "true_hr"});
    for (const auto& row : ground_truth_table(db)) {
      w.field(row.treatment).field(row.comparator).field(row.outcome).field(row.true_hr);
      w.end_row();
    }
  }
}

PatientDatabase read_database(const std::filesystem::path& dir) {
  std::vector<Person> persons;
  {
    auto t = read_csv(dir / table_files::kPersons);
    const auto id = t.column("person_id"), by = t.column("birth_year"), sx = t.column("sex");
    persons.reserve(t.rows.size());
    for (const auto& r : t.rows)
      persons.push_back({parse_int(r[id]), static_cast<int>(parse_int(r[by])),
                         static_cast<int>(parse_int(r[sx]))});
  }
  std::vector<ObservationPeriod> periods;
  {
    auto t = read_csv(dir / table_files::kObservationPeriods);
    const auto id = t.column("person_id"), s = t.column("start_day"), e = t.column("end_day");
    for (const auto& r : t.rows)
      periods.push_back({parse_int(r[id]), static_cast<Day>(parse_int(r[s])),
                         static_cast<Day>(parse_int(r[e]))});
  }
  std::vector<DrugExposure> exposures;
  {
    auto t = read_csv(dir / table_files::kDrugExposures);
    const auto id = t.column("person_id"), d = t.column("drug_id"), s = t.column("start_day"),
               e = t.column("end_day");
    for (const auto& r : t.rows)
      exposures.push_back({parse_int(r[id]), parse_int(r[d]), static_cast<Day>(parse_int(r[s])),
                           static_cast<Day>(parse_int(r[e]))});
  }
  std::vector<ConditionOccurrence> conditions;
  {
    auto t = read_csv(dir / table_files::kConditionOccurrences);
    const auto id = t.column("person_id"), c = t.column("condition_id"), d = t.column("day");
    for (const auto& r : t.rows)
      conditions.push_back({parse_int(r[id]), parse_int(r[c]), static_cast<Day>(parse_int(r[d]))});
  }
  std::optional<GroundTruth> truth;
  if (std::filesystem::exists(dir / table_files::kGroundTruth)) {
    auto t = read_csv(dir / table_files::kGroundTruth);
    const auto tr = t.column("treatment"), o = t.column("outcome"), l = t.column("true_log_hr");
    truth.emplace();
    for (const auto& r : t.rows) (*truth)[{parse_int(r[tr]), parse_int(r[o])}] = parse_double(r[l]);
  }
  return PatientDatabase(std::move(persons), std::move(periods), std::move(exposures),
                         std::move(conditions), std::move(truth));
}

}  // namespace obsgrid
