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

#include "obsgrid/covariates.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

#include "obsgrid/errors.hpp"

namespace obsgrid {

const char* to_string(CovariateClass c) {
  switch (c) {
    case CovariateClass::demographic: return "demographic";
    case CovariateClass::condition: return "condition";
    case CovariateClass::drug: return "drug";
    case CovariateClass::count_score: return "count_score";
  }
  return "unknown";
}

SparseCovariateMatrix SparseCovariateMatrix::from_entries(std::size_t n_rows,
                                                          std::vector<CovariateColumn> columns,
                                                          std::vector<MatrixEntry> entries) {
  if (n_rows > UINT32_MAX) throw ConfigError("too many rows for sparse matrix");
  for (const auto& e : entries) {
    if (e.row >= n_rows || e.column >= columns.size())
      throw ConfigError("matrix entry index out of range");
    if (!std::isfinite(e.value)) throw ConfigError("matrix entry is not finite");
  }
  std::sort(entries.begin(), entries.end(), [](const MatrixEntry& a, const MatrixEntry& b) {
    return std::tie(a.column, a.row) < std::tie(b.column, b.row);
  });
  SparseCovariateMatrix m;
  m.n_rows_ = n_rows;
  m.col_ptr_.assign(columns.size() + 1, 0);
  std::size_t i = 0;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    m.col_ptr_[j] = m.values_.size();
    while (i < entries.size() && entries[i].column == j) {
      const std::size_t row = entries[i].row;
      double v = 0.0;
      while (i < entries.size() && entries[i].column == j && entries[i].row == row)
        v += entries[i++].value;
      if (v == 0.0) continue;
      if (columns[j].binary && v != 1.0)
        throw ConfigError("binary column " + std::to_string(columns[j].covariate_id) +
                          " has a non-binary value");
      m.row_index_.push_back(static_cast<std::uint32_t>(row));
      m.values_.push_back(v);
    }
  }
  m.col_ptr_[columns.size()] = m.values_.size();
  m.columns_ = std::move(columns);
  return m;
}

double SparseCovariateMatrix::at(std::size_t row, std::size_t col) const {
  auto rows = column_rows(col);
  auto it = std::lower_bound(rows.begin(), rows.end(), static_cast<std::uint32_t>(row));
  if (it == rows.end() || *it != row) return 0.0;
  return column_values(col)[static_cast<std::size_t>(it - rows.begin())];
}

std::vector<std::vector<double>> SparseCovariateMatrix::to_dense() const {
  std::vector<std::vector<double>> d(n_rows_, std::vector<double>(cols(), 0.0));
  for (std::size_t j = 0; j < cols(); ++j) {
    auto r = column_rows(j);
    auto v = column_values(j);
    for (std::size_t k = 0; k < r.size(); ++k) d[r[k]][j] = v[k];
  }
  return d;
}

SparseCovariateMatrix SparseCovariateMatrix::select_columns(std::span<const std::size_t> keep) const {
  SparseCovariateMatrix m;
  m.n_rows_ = n_rows_;
  m.col_ptr_.assign(1, 0);
  for (std::size_t j : keep) {
    m.columns_.push_back(columns_[j]);
    auto r = column_rows(j);
    auto v = column_values(j);
    m.row_index_.insert(m.row_index_.end(), r.begin(), r.end());
    m.values_.insert(m.values_.end(), v.begin(), v.end());
    m.col_ptr_.push_back(m.values_.size());
  }
  return m;
}

SparseCovariateMatrix SparseCovariateMatrix::select_rows(std::span<const std::size_t> keep) const {
  constexpr std::uint32_t kDropped = UINT32_MAX;
  std::vector<std::uint32_t> new_row(n_rows_, kDropped);
  for (std::size_t i = 0; i < keep.size(); ++i) new_row[keep[i]] = static_cast<std::uint32_t>(i);
  SparseCovariateMatrix m;
  m.n_rows_ = keep.size();
  m.columns_ = columns_;
  m.col_ptr_.assign(1, 0);
  std::vector<std::pair<std::uint32_t, double>> buf;
  for (std::size_t j = 0; j < cols(); ++j) {
    buf.clear();
    auto r = column_rows(j);
    auto v = column_values(j);
    for (std::size_t k = 0; k < r.size(); ++k)
      if (new_row[r[k]] != kDropped) buf.emplace_back(new_row[r[k]], v[k]);
    std::sort(buf.begin(), buf.end());
    for (const auto& [row, val] : buf) {
      m.row_index_.push_back(row);
      m.values_.push_back(val);
    }
    m.col_ptr_.push_back(m.values_.size());
  }
  return m;
}

SparseCovariateMatrix SparseCovariateMatrix::with_column(CovariateColumn column,
                                                         std::span<const double> values) const {
  if (values.size() != n_rows_) throw ConfigError("column length mismatch");
  SparseCovariateMatrix m = *this;
  m.columns_.push_back(std::move(column));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 0.0) continue;
    if (!std::isfinite(values[i])) throw ConfigError("matrix entry is not finite");
    m.row_index_.push_back(static_cast<std::uint32_t>(i));
    m.values_.push_back(values[i]);
  }
  m.col_ptr_.push_back(m.values_.size());
  return m;
}

namespace {

std::int64_t covariate_id(std::int64_t concept_id, int analysis) { return concept_id * 1000 + analysis; }

struct ColumnKey {
  CovariateClass cls;
  std::int64_t id;
  auto operator<=>(const ColumnKey&) const = default;
};

}  // namespace

SparseCovariateMatrix extract_covariates(const PatientDatabase& db, const CohortPair& pair,
                                         int lookback_days) {
  namespace ca = covariate_analysis;
  std::map<ColumnKey, CovariateColumn> seen;
  std::vector<std::pair<std::size_t, ColumnKey>> raw;
  std::vector<std::pair<std::size_t, double>> score;  // row -> distinct condition count

  auto add = [&](std::size_t row, CovariateClass cls, std::int64_t id, auto&& describe) {
    ColumnKey key{cls, id};
    if (!seen.contains(key)) seen.emplace(key, CovariateColumn{id, describe(), cls, true});
    raw.emplace_back(row, key);
  };

  std::size_t row = 0;
  auto visit = [&](const Subject& s) {
    const Day index = s.index_day;
    const Day window_start = index - lookback_days;  // exclusive
    const auto& person = db.persons()[s.person_index];

    const int age = year_of_day(index) - person.birth_year;
    const int bin = std::max(age, 0) / 5;
    add(row, CovariateClass::demographic, covariate_id(bin, ca::kAgeGroup), [&] {
      return "age group: " + std::to_string(bin * 5) + "-" + std::to_string(bin * 5 + 4);
    });
    if (person.sex == 1)
      add(row, CovariateClass::demographic, covariate_id(8532, ca::kGender),
          [] { return std::string("gender = female"); });
    const int year = year_of_day(index);
    add(row, CovariateClass::demographic, covariate_id(year, ca::kIndexYear),
        [&] { return "index year: " + std::to_string(year); });

    std::size_t distinct_in_window = 0;
    auto conds = db.conditions_of(s.person_index);
    for (std::size_t k = 0; k < conds.size();) {
      const ConditionId cid = conds[k].condition_id;
      bool any = false, window = false;
      for (; k < conds.size() && conds[k].condition_id == cid; ++k) {
        const Day d = conds[k].day;
        if (d >= index) continue;
        any = true;
        if (d > window_start) window = true;
      }
      if (any)
        add(row, CovariateClass::condition, covariate_id(cid, ca::kConditionAnyTimePrior),
            [&] { return "condition " + std::to_string(cid) + " any time prior"; });
      if (window) {
        ++distinct_in_window;
        add(row, CovariateClass::condition, covariate_id(cid, ca::kConditionWindow), [&] {
          return "condition " + std::to_string(cid) + " in " + std::to_string(lookback_days) +
                 "d window";
        });
      }
    }
    auto drugs = db.drug_exposures_of(s.person_index);
    for (std::size_t k = 0; k < drugs.size();) {
      const DrugId did = drugs[k].drug_id;
      bool any = false, window = false;
      for (; k < drugs.size() && drugs[k].drug_id == did; ++k) {
        const Day d = drugs[k].start_day;
        if (d >= index) continue;
        any = true;
        if (d > window_start) window = true;
      }
      if (any)
        add(row, CovariateClass::drug, covariate_id(did, ca::kDrugAnyTimePrior),
            [&] { return "drug " + std::to_string(did) + " any time prior"; });
      if (window)
        add(row, CovariateClass::drug, covariate_id(did, ca::kDrugWindow), [&] {
          return "drug " + std::to_string(did) + " in " + std::to_string(lookback_days) + "d window";
        });
    }
    if (distinct_in_window > 0) score.emplace_back(row, static_cast<double>(distinct_in_window));
    ++row;
  };
  for (const auto& s : pair.target_subjects) visit(s);
  for (const auto& s : pair.comparator_subjects) visit(s);

  const ColumnKey score_key{CovariateClass::count_score,
                            covariate_id(1, ca::kDistinctConditionCount)};
  seen.emplace(score_key, CovariateColumn{score_key.id, "distinct conditions in window",
                                          CovariateClass::count_score, false});

  std::map<ColumnKey, std::size_t> index_of;
  std::vector<CovariateColumn> columns;
  for (auto& [key, col] : seen) {
    index_of.emplace(key, columns.size());
    columns.push_back(std::move(col));
  }
  std::vector<MatrixEntry> entries;
  entries.reserve(raw.size() + score.size());
  for (const auto& [r, key] : raw) entries.push_back({r, index_of.at(key), 1.0});
  const std::size_t score_col = index_of.at(score_key);
  for (const auto& [r, v] : score) entries.push_back({r, score_col, v});
  return SparseCovariateMatrix::from_entries(row, std::move(columns), std::move(entries));
}

SparseCovariateMatrix filter_low_prevalence(const SparseCovariateMatrix& m, std::size_t min_nonzero) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < m.cols(); ++j)
    if (m.nonzero_count(j) >= min_nonzero) keep.push_back(j);
  return m.select_columns(keep);
}

namespace {

double smd(double mean_t, double var_t, double mean_c, double var_c) {
  var_t = std::max(var_t, 0.0);
  var_c = std::max(var_c, 0.0);
  const double denom = std::sqrt((var_t + var_c) / 2.0);
  if (denom == 0.0) return 0.0;
  return std::fabs(mean_t - mean_c) / denom;
}

}  // namespace

BalanceReport standardized_differences(const SparseCovariateMatrix& m, std::span<const int> treated,
                                       std::optional<std::span<const int>> strata) {
  const std::size_t n = m.rows();
  if (treated.size() != n) throw DiagnosticsError("arm vector length mismatch");
  if (strata && strata->size() != n) throw DiagnosticsError("strata vector length mismatch");

  std::size_t n_strata = 1;
  if (strata)
    for (int s : *strata) {
      if (s < 0) throw DiagnosticsError("negative stratum id");
      n_strata = std::max(n_strata, static_cast<std::size_t>(s) + 1);
    }
  auto stratum = [&](std::size_t i) -> std::size_t {
    return strata ? static_cast<std::size_t>((*strata)[i]) : 0;
  };
  // counts[s][arm]
  std::vector<std::array<double, 2>> counts(n_strata, {0.0, 0.0});
  double n_t = 0, n_c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int arm = treated[i] ? 1 : 0;
    counts[stratum(i)][arm] += 1.0;
    (arm ? n_t : n_c) += 1.0;
  }
  if (n_t == 0 || n_c == 0) throw DiagnosticsError("standardized difference needs both arms");

  std::vector<double> weight(n_strata, 0.0);
  double weight_total = 0.0;
  for (std::size_t s = 0; s < n_strata; ++s) {
    if (counts[s][0] > 0 && counts[s][1] > 0) {
      weight[s] = counts[s][0] + counts[s][1];
      weight_total += weight[s];
    }
  }
  for (auto& w : weight) w = weight_total > 0 ? w / weight_total : 0.0;

  BalanceReport report;
  std::vector<std::array<double, 4>> acc(n_strata);  // sum_c, sumsq_c, sum_t, sumsq_t
  for (std::size_t j = 0; j < m.cols(); ++j) {
    std::fill(acc.begin(), acc.end(), std::array<double, 4>{0, 0, 0, 0});
    double st[2] = {0, 0}, sq[2] = {0, 0};
    auto rows = m.column_rows(j);
    auto vals = m.column_values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t i = rows[k];
      const int arm = treated[i] ? 1 : 0;
      const double v = vals[k];
      st[arm] += v;
      sq[arm] += v * v;
      auto& a = acc[stratum(i)];
      a[2 * arm] += v;
      a[2 * arm + 1] += v * v;
    }
    const double mt = st[1] / n_t, mc = st[0] / n_c;
    CovariateBalance b;
    b.covariate_id = m.column(j).covariate_id;
    b.smd_before = smd(mt, sq[1] / n_t - mt * mt, mc, sq[0] / n_c - mc * mc);
    if (strata) {
      double wm[2] = {0, 0}, wq[2] = {0, 0};
      for (std::size_t s = 0; s < n_strata; ++s) {
        if (weight[s] == 0.0) continue;
        for (int arm = 0; arm < 2; ++arm) {
          wm[arm] += weight[s] * acc[s][2 * arm] / counts[s][arm];
          wq[arm] += weight[s] * acc[s][2 * arm + 1] / counts[s][arm];
        }
      }
      b.smd_after = smd(wm[1], wq[1] - wm[1] * wm[1], wm[0], wq[0] - wm[0] * wm[0]);
    } else {
      b.smd_after = b.smd_before;
    }
    report.max_abs_smd_before = std::max(report.max_abs_smd_before, b.smd_before);
    report.max_abs_smd_after = std::max(report.max_abs_smd_after, b.smd_after);
    report.columns.push_back(b);
  }
  return report;
}

}  // namespace obsgrid
