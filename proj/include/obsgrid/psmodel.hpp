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
#include <vector>

#include "obsgrid/covariates.hpp"
#include "obsgrid/glm.hpp"

namespace obsgrid {

struct PenalizedLogisticFit {
  double intercept = 0.0;
  std::map<std::size_t, double> coefficients;  // column -> nonzero coefficient
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  std::optional<std::map<double, double>> cv_log_likelihoods;

  SparseGlmFit as_glm_fit() const;
};

/// Minimizes mean log-loss + lambda * |beta|_1 (intercept unpenalized).
/// `label` is 1 for target rows. Throws DegenerateFitError when one label is absent.
PenalizedLogisticFit fit_l1_logistic(const SparseCovariateMatrix& m, std::span<const int> label,
                                     double lambda, CoordinateDescentOptions options = {});

/// `count` values log-spaced from lambda_max down to lambda_max * min_ratio.
std::vector<double> default_lambda_grid(const SparseCovariateMatrix& m, std::span<const int> label,
                                        std::size_t count = 20, double min_ratio = 1e-3);

struct LambdaSelection {
  double lambda = 0.0;
  std::map<double, double> cv_log_likelihoods;  // lambda -> mean held-out log likelihood
  std::vector<int> fold_of;                     // per row
};

/// Label-stratified, seeded k-fold cross-validation over `grid`. The lambda
/// with the highest mean held-out log likelihood wins; ties go to the larger
/// lambda. Throws CvDegenerateError when a fold lacks a label class.
LambdaSelection select_lambda_cv(const SparseCovariateMatrix& m, std::span<const int> label,
                                 std::span<const double> grid, std::size_t n_folds,
                                 std::uint64_t seed, CoordinateDescentOptions options = {});

/// Fitted probabilities of the target label.
std::vector<double> predict_scores(const SparseCovariateMatrix& m, const PenalizedLogisticFit& fit);

struct PropensityStrata {
  std::vector<double> scores;
  std::vector<int> stratum_of;
  std::vector<double> boundaries;  // n_strata - 1 nondecreasing cut points
  int n_strata = 1;

  std::vector<std::size_t> sizes() const;
};

/// Pooled-quantile strata: boundary k is the (k/n_strata) empirical quantile
/// (inverse ECDF); a score equal to a boundary falls in the lower stratum.
PropensityStrata stratify(std::span<const double> scores, int n_strata);

struct OverlapDiagnostics {
  static constexpr std::size_t kBins = 50;
  std::vector<std::size_t> target_histogram;      // kBins counts over [0,1]
  std::vector<std::size_t> comparator_histogram;
  double equipoise_share = 0.0;
};

/// Preference score: logit(pref) = logit(ps) - logit(target_share).
double preference_score(double ps, double target_share);

/// Share of subjects whose preference score lies in [0.3, 0.7].
OverlapDiagnostics overlap_diagnostics(std::span<const double> scores, std::span<const int> arm);

struct PropensityOptions {
  std::size_t n_folds = 10;
  std::size_t n_lambdas = 20;
  double lambda_min_ratio = 1e-3;
  int n_strata = 10;
  CoordinateDescentOptions solver;
};

struct PropensityModel {
  PenalizedLogisticFit fit;
  std::vector<double> scores;
};

/// Grid construction, cross-validated lambda, final full-data fit and scores.
PropensityModel fit_propensity_model(const SparseCovariateMatrix& m, std::span<const int> label,
                                     const PropensityOptions& options, std::uint64_t seed);

}  // namespace obsgrid
