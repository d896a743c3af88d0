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
#include <string>
#include <vector>

#include "obsgrid/calibration.hpp"
#include "obsgrid/store.hpp"

namespace obsgrid {

/// Interval levels used for coverage curves: 0.05, 0.10, ..., 0.95 and 0.99.
std::vector<double> default_coverage_levels();

struct ContextCoverage {
  ContextKey context;
  CoverageCurve curve;
};

/// Leave-one-group-out coverage for every context holding at least 2 control groups.
std::vector<ContextCoverage> loo_coverage(const ResultStore& store, std::span<const double> levels,
                                          const ErrorModelOptions& options = {});

/// Writes coverage_curve.csv (context, stratum, level, coverage, controls).
void write_coverage_curves(const std::vector<ContextCoverage>& curves,
                           const std::filesystem::path& file);

struct ReportSummary {
  std::size_t records = 0;
  std::size_t estimable = 0;
  std::size_t calibrated = 0;
  std::size_t control_estimates = 0;
  double control_coverage_nominal = 0.0;     // NaN without controls
  double control_coverage_calibrated = 0.0;  // NaN without calibrated controls
  std::size_t i2_triplets = 0;
  double i2_share_below_025_nominal = 0.0;
  double i2_share_below_025_calibrated = 0.0;
  /// JSON rendering, also written as report_summary.json.
  std::string to_json() const;
};

namespace report_files {
inline constexpr const char* kEstimateScatter = "estimate_scatter.csv";
inline constexpr const char* kForest = "forest.csv";
inline constexpr const char* kCalibrationScatter = "calibration_scatter.csv";
inline constexpr const char* kCoverageCurve = "coverage_curve.csv";
inline constexpr const char* kI2 = "i2.csv";
inline constexpr const char* kI2Histogram = "i2_histogram.csv";
inline constexpr const char* kTransitivity = "transitivity.csv";
inline constexpr const char* kSummary = "report_summary.json";
}  // namespace report_files

/// Writes the report files into out_dir (created if needed). Throws IoError
/// when the directory cannot be written.
ReportSummary emit_reports(const ResultStore& store, const std::filesystem::path& out_dir);

}  // namespace obsgrid
