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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "obsgrid/cox.hpp"

namespace obsgrid {

/// Gaussian systematic error: estimate ~ N(theta + a + b*theta,
/// exp(2*(c + d*theta)) + se^2) for true log HR theta.
struct SystematicErrorModel {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  std::size_t fitted_on = 0;
  bool converged = false;
  int iterations = 0;

  double bias_mean(double theta) const { return a + b * theta; }
  double bias_sd(double theta) const;
};

struct ControlEstimate {
  double log_hr = 0.0;
  double se = 0.0;
  double true_log_hr = 0.0;
  std::int64_t parent_negative = 0;  // a negative control is its own parent
};

struct ErrorModelOptions {
  std::size_t minimum_controls = 10;
  double gradient_tolerance = 1e-6;
  int max_iterations = 2000;
};

/// Maximum-likelihood error model, or nullopt when fewer than
/// minimum_controls usable controls are given. The slope terms b and d are
/// only fitted when at least two distinct true effect sizes are present.
std::optional<SystematicErrorModel> fit_error_model(std::span<const ControlEstimate> controls,
                                                   const ErrorModelOptions& options = {});

/// Mean log likelihood of the controls under a model.
double error_model_log_likelihood(std::span<const ControlEstimate> controls,
                                  const SystematicErrorModel& model);

struct CalibratedInterval {
  std::optional<std::pair<double, double>> ci;  // HR scale
  std::optional<std::string> failure;
};

/// Interval inverting the predictive distribution of the estimate over the
/// true log HR, by bisection within 20 log units of the estimate. Throws
/// ConfigError when se <= 0 or alpha is outside (0, 1].
CalibratedInterval calibrate_ci(double log_hr, double se, const SystematicErrorModel& model,
                                double alpha = 0.05);

/// Smallest alpha at which the calibrated interval excludes HR = 1.
double calibrated_p_value(double log_hr, double se, const SystematicErrorModel& model);

/// Fills calibrated_ci95 / calibrated_p of an estimable estimate. Returns
/// false (leaving the nominal values) when the interval cannot be computed.
bool apply_calibration(EffectEstimate& estimate, const SystematicErrorModel& model);

struct IntervalWithTruth {
  double lb = 0.0;
  double ub = 0.0;
  double true_hr = 1.0;
};

/// Fraction of closed intervals containing their true HR. Throws
/// ConfigError when empty.
double coverage(std::span<const IntervalWithTruth> intervals);

struct CoverageCurve {
  std::vector<double> levels;
  /// true HR -> coverage per level (NaN when no held-out control qualifies).
  std::map<double, std::vector<double>> by_true_hr;
  std::map<double, std::size_t> controls_by_true_hr;
  std::vector<double> pooled;  // all strata together
  std::size_t model_fits = 0;
  std::size_t unavailable_folds = 0;
  std::size_t evaluated_controls = 0;
};

/// Leave-one-group-out calibration: for every parent negative, fits the
/// error model on all other groups and evaluates the held-out group's
/// calibrated intervals at each central level in [0, 1). Folds whose model
/// is unavailable contribute nothing. Throws ConfigError with fewer than 2 groups.
CoverageCurve loo_cross_validate(std::span<const ControlEstimate> controls,
                                 std::span<const double> levels,
                                 const ErrorModelOptions& options = {});

}  // namespace obsgrid
