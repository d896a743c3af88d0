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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obsgrid/cohorts.hpp"
#include "obsgrid/database.hpp"

namespace obsgrid {

enum class CovariateClass { demographic, condition, drug, count_score };

const char* to_string(CovariateClass c);

struct CovariateColumn {
  std::int64_t covariate_id = 0;
  std::string description;
  CovariateClass covariate_class = CovariateClass::demographic;
  bool binary = true;
};

/// Covariate id = concept * 1000 + analysis id.
namespace covariate_analysis {
inline constexpr int kGender = 1;
inline constexpr int kAgeGroup = 3;
inline constexpr int kIndexYear = 11;
inline constexpr int kConditionWindow = 101;
inline constexpr int kConditionAnyTimePrior = 102;
inline constexpr int kDrugWindow = 401;
inline constexpr int kDrugAnyTimePrior = 402;
inline constexpr int kDistinctConditionCount = 901;
}  // namespace covariate_analysis

struct MatrixEntry {
  std::size_t row = 0;
  std::size_t column = 0;
  double value = 0.0;
};

/// Column-compressed sparse matrix with per-column metadata. Only nonzero
/// values are stored, so nonzero_count(j) is the stored length of column j.
class SparseCovariateMatrix {
 public:
  SparseCovariateMatrix() = default;

  /// Duplicate (row, column) entries are summed; zeros are dropped. Throws
  /// ConfigError on out-of-range indices, non-finite values, or non-{0,1}
  /// values in binary columns.
  static SparseCovariateMatrix from_entries(std::size_t n_rows, std::vector<CovariateColumn> columns,
                                            std::vector<MatrixEntry> entries);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<CovariateColumn>& columns() const { return columns_; }
  const CovariateColumn& column(std::size_t j) const { return columns_[j]; }

  std::span<const std::uint32_t> column_rows(std::size_t j) const {
    return std::span(row_index_).subspan(col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]);
  }
  std::span<const double> column_values(std::size_t j) const {
    return std::span(values_).subspan(col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]);
  }
  std::size_t nonzero_count(std::size_t j) const { return col_ptr_[j + 1] - col_ptr_[j]; }
  std::size_t nonzeros() const { return values_.size(); }

  double at(std::size_t row, std::size_t col) const;
  std::vector<std::vector<double>> to_dense() const;

  SparseCovariateMatrix select_columns(std::span<const std::size_t> keep) const;
  SparseCovariateMatrix select_rows(std::span<const std::size_t> keep) const;
  /// Appends a column (used by tests of invariance to constant columns).
  SparseCovariateMatrix with_column(CovariateColumn column, std::span<const double> values) const;

 private:
  std::size_t n_rows_ = 0;
  std::vector<CovariateColumn> columns_;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<std::uint32_t> row_index_;
  std::vector<double> values_;
};

/// One row per subject (target subjects, then comparator subjects). Only
/// data strictly before each subject's index day is read.
SparseCovariateMatrix extract_covariates(const PatientDatabase& db, const CohortPair& pair,
                                         int lookback_days);

/// Drops columns with fewer than min_nonzero stored values; order preserved.
SparseCovariateMatrix filter_low_prevalence(const SparseCovariateMatrix& m, std::size_t min_nonzero);

struct CovariateBalance {
  std::int64_t covariate_id = 0;
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct BalanceReport {
  std::vector<CovariateBalance> columns;
  double max_abs_smd_before = 0.0;
  double max_abs_smd_after = 0.0;

  /// Every column below the conventional 0.1 threshold after adjustment.
  bool adequate() const { return max_abs_smd_after < 0.1; }
};

/// Absolute standardized mean differences. `treated` marks target rows.
/// With strata, arm distributions are reweighted so each stratum counts by
/// its share of the pooled population; strata missing an arm are skipped.
/// Without strata, smd_after equals smd_before. Throws DiagnosticsError if
/// an arm is empty.
BalanceReport standardized_differences(const SparseCovariateMatrix& m, std::span<const int> treated,
                                       std::optional<std::span<const int>> strata = std::nullopt);

}  // namespace obsgrid
