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

#include "obsgrid/psmodel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

SparseGlmFit PenalizedLogisticFit::as_glm_fit() const {
  SparseGlmFit f;
  f.intercept = intercept;
  f.lambda = lambda;
  f.converged = converged;
  f.iterations = iterations;
  f.coefficients.assign(coefficients.begin(), coefficients.end());
  return f;
}

namespace {

std::vector<double> labels_as_double(std::span<const int> label, std::size_t rows) {
  if (label.size() != rows) throw ConfigError("label length does not match matrix rows");
  std::vector<double> y(label.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = label[i] ? 1.0 : 0.0;
  return y;
}

PenalizedLogisticFit from_glm(const SparseGlmFit& g) {
  PenalizedLogisticFit f;
  f.intercept = g.intercept;
  f.lambda = g.lambda;
  f.converged = g.converged;
  f.iterations = g.iterations;
  f.coefficients.insert(g.coefficients.begin(), g.coefficients.end());
  return f;
}

}  // namespace

PenalizedLogisticFit fit_l1_logistic(const SparseCovariateMatrix& m, std::span<const int> label,
                                     double lambda, CoordinateDescentOptions options) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  const auto y = labels_as_double(label, m.rows());
  GlmProblem problem{&m, y, {}, {}, GlmFamily::logistic};
  return from_glm(fit_sparse_glm(problem, lambda, options));
}

std::vector<double> default_lambda_grid(const SparseCovariateMatrix& m, std::span<const int> label,
                                        std::size_t count, double min_ratio) {
  if (count == 0) throw ConfigError("lambda grid needs at least one value");
  if (!(min_ratio > 0.0 && min_ratio <= 1.0)) throw ConfigError("lambda_min_ratio must be in (0,1]");
  const auto y = labels_as_double(label, m.rows());
  GlmProblem problem{&m, y, {}, {}, GlmFamily::logistic};
  double top = CoordinateDescent(problem).lambda_max();
  // With no signal any positive lambda gives the null model.
  if (!(top > 0.0)) top = 1.0;
  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    grid[k] = top * std::pow(min_ratio, frac);
  }
  return grid;
}

LambdaSelection select_lambda_cv(const SparseCovariateMatrix& m, std::span<const int> label,
                                 std::span<const double> grid, std::size_t n_folds,
                                 std::uint64_t seed, CoordinateDescentOptions options) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (double l : grid)
    if (!(l > 0.0)) throw ConfigError("lambda grid values must be > 0");
  if (n_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (m.rows() < n_folds) throw ConfigError("fewer rows than folds");
  const auto y = labels_as_double(label, m.rows());

  LambdaSelection sel;
  sel.fold_of.assign(m.rows(), 0);
  std::mt19937_64 rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < y.size(); ++i)
      if ((y[i] == 1.0) == (cls == 1)) rows.push_back(i);
    if (rows.size() < n_folds)
      throw CvDegenerateError("a cross-validation fold lacks a label class");
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t k = 0; k < rows.size(); ++k)
      sel.fold_of[rows[k]] = static_cast<int>(k % n_folds);
  }

  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::map<double, double> total;
  std::vector<double> weights(m.rows());
  for (std::size_t fold = 0; fold < n_folds; ++fold) {
    for (std::size_t i = 0; i < weights.size(); ++i)
      weights[i] = sel.fold_of[i] == static_cast<int>(fold) ? 0.0 : 1.0;
    GlmProblem problem{&m, y, {}, weights, GlmFamily::logistic};
    CoordinateDescent solver(problem, options);
    for (double lambda : sorted) {
      solver.fit(lambda);
      const auto eta = solver.eta();
      double ll = 0;
      for (std::size_t i = 0; i < eta.size(); ++i) {
        if (weights[i] != 0.0) continue;
        ll -= log1p_exp(eta[i]) - y[i] * eta[i];
      }
      total[lambda] += ll;
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  for (double lambda : sorted) {  // descending, so ties keep the larger lambda
    const double mean_ll = total[lambda] / static_cast<double>(n_folds);
    sel.cv_log_likelihoods[lambda] = mean_ll;
    if (mean_ll > best) {
      best = mean_ll;
      sel.lambda = lambda;
    }
  }
  return sel;
}

std::vector<double> predict_scores(const SparseCovariateMatrix& m, const PenalizedLogisticFit& fit) {
  auto eta = fit.as_glm_fit().linear_predictor(m);
  for (auto& e : eta) e = expit(e);
  return eta;
}

std::vector<std::size_t> PropensityStrata::sizes() const {
  std::vector<std::size_t> n(static_cast<std::size_t>(n_strata), 0);
  for (int s : stratum_of) ++n[static_cast<std::size_t>(s)];
  return n;
}

PropensityStrata stratify(std::span<const double> scores, int n_strata) {
  if (n_strata < 1) throw ConfigError("n_strata must be >= 1");
  if (scores.size() < static_cast<std::size_t>(n_strata))
    throw ConfigError("fewer rows than strata");
  PropensityStrata out;
  out.n_strata = n_strata;
  out.scores.assign(scores.begin(), scores.end());
  std::vector<double> sorted = out.scores;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  for (int k = 1; k < n_strata; ++k) {
    // Inverse ECDF at k/n_strata: smallest x with F(x) >= k/n_strata.
    const std::size_t pos = (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(n_strata) - 1) /
                            static_cast<std::size_t>(n_strata);
    out.boundaries.push_back(sorted[std::max<std::size_t>(pos, 1) - 1]);
  }
  out.stratum_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = std::lower_bound(out.boundaries.begin(), out.boundaries.end(), out.scores[i]);
    out.stratum_of[i] = static_cast<int>(it - out.boundaries.begin());
  }
  return out;
}

double preference_score(double ps, double target_share) {
  if (ps <= 0.0) return 0.0;
  if (ps >= 1.0) return 1.0;
  return expit(logit(ps) - logit(target_share));
}

OverlapDiagnostics overlap_diagnostics(std::span<const double> scores, std::span<const int> arm) {
  if (scores.size() != arm.size()) throw ConfigError("scores and arm length mismatch");
  OverlapDiagnostics d;
  d.target_histogram.assign(OverlapDiagnostics::kBins, 0);
  d.comparator_histogram.assign(OverlapDiagnostics::kBins, 0);
  std::size_t n_t = 0;
  for (int a : arm) n_t += a ? 1 : 0;
  const std::size_t n = arm.size();
  if (n_t == 0 || n_t == n) throw DiagnosticsError("overlap diagnostics need both arms");
  const double share = static_cast<double>(n_t) / static_cast<double>(n);
  std::size_t in_equipoise = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::clamp(scores[i], 0.0, 1.0);
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(s * OverlapDiagnostics::kBins),
                                           OverlapDiagnostics::kBins - 1);
    (arm[i] ? d.target_histogram : d.comparator_histogram)[bin]++;
    const double pref = preference_score(s, share);
    if (pref >= 0.3 && pref <= 0.7) ++in_equipoise;
  }
  d.equipoise_share = static_cast<double>(in_equipoise) / static_cast<double>(n);
  return d;
}

PropensityModel fit_propensity_model(const SparseCovariateMatrix& m, std::span<const int> label,
                                     const PropensityOptions& options, std::uint64_t seed) {
  const auto grid = default_lambda_grid(m, label, options.n_lambdas, options.lambda_min_ratio);
  auto selection = select_lambda_cv(m, label, grid, options.n_folds, seed, options.solver);

  // Full-data path down to the selected lambda, warm-started.
  const auto y = labels_as_double(label, m.rows());
  GlmProblem problem{&m, y, {}, {}, GlmFamily::logistic};
  CoordinateDescent solver(problem, options.solver);
  SparseGlmFit final_fit;
  for (double lambda : grid) {
    if (lambda < selection.lambda) break;
    final_fit = solver.fit(lambda);
  }
  PropensityModel model;
  model.fit = from_glm(final_fit);
  model.fit.cv_log_likelihoods = std::move(selection.cv_log_likelihoods);
  model.scores = predict_scores(m, model.fit);
  return model;
}

}  // namespace obsgrid
