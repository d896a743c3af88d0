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

#include <span>
#include <utility>
#include <vector>

#include "obsgrid/covariates.hpp"

namespace obsgrid {

enum class GlmFamily { logistic, poisson };

struct CoordinateDescentOptions {
  double coord_tolerance = 1e-7;  // max absolute coefficient change in a full sweep
  int max_iterations = 10000;     // sweeps
  double kkt_tolerance = 1e-4;
};

/// L1-penalized GLM problem:
///   (1/W) * sum_i w_i * loss(y_i, intercept + offset_i + x_i . beta) + lambda * |beta|_1
/// with W = sum_i w_i. Empty offset means 0; empty weights mean 1.
/// Logistic loss is the negative Bernoulli log likelihood; Poisson loss is
/// exp(eta) - y * eta.
struct GlmProblem {
  const SparseCovariateMatrix* x = nullptr;
  std::span<const double> y;
  std::span<const double> offset;
  std::span<const double> weights;
  GlmFamily family = GlmFamily::logistic;
};

struct SparseGlmFit {
  double intercept = 0.0;
  /// Nonzero coefficients ordered by column.
  std::vector<std::pair<std::size_t, double>> coefficients;
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;

  std::vector<double> dense_coefficients(std::size_t n_cols) const;
  /// intercept + x_i . beta for every row (offset not included).
  std::vector<double> linear_predictor(const SparseCovariateMatrix& x) const;
};

/// L1-penalized GLM solver with warm starts across successive fit() calls.
///
/// Each outer iteration forms the quadratic (IRLS) model of the loss at the
/// current fit and minimizes it plus the penalty by cyclic coordinate
/// descent over a working set, using the weighted Gram matrix of the working
/// columns. The resulting step is shortened by backtracking until it meets
/// an Armijo decrease condition on the exact objective. The working set
/// starts from the nonzero coefficients plus the sequential strong-rule
/// survivors and grows until no excluded column violates the optimality
/// conditions. Convergence is declared when a step moves no coefficient
/// (intercept included) by coord_tolerance or more.
class CoordinateDescent {
 public:
  /// Throws DegenerateFitError for single-label logistic or zero-event Poisson data.
  CoordinateDescent(const GlmProblem& problem, CoordinateDescentOptions options = {});

  SparseGlmFit fit(double lambda);

  /// Current intercept + offset + x.beta, including zero-weight rows.
  std::span<const double> eta() const { return eta_; }
  /// Smallest lambda whose solution is all-zero, from the null-model gradient.
  double lambda_max() const { return lambda_max_; }

 private:
  double loss(double eta, double y) const;
  double mean(double eta) const;
  double variance(double mu) const;
  double objective_at(std::span<const double> eta, double penalty) const;
  std::vector<double> gradient() const;
  /// One proximal Newton step over the working set; returns the largest
  /// coefficient move, or a negative value when no decrease was possible.
  double newton_step(const std::vector<std::size_t>& working, double lambda);
  SparseGlmFit snapshot(double lambda, bool converged, int iterations) const;

  GlmProblem p_;
  CoordinateDescentOptions opt_;
  std::size_t n_ = 0;
  double weight_total_ = 0.0;
  std::vector<double> w_;
  std::vector<double> beta_;
  double intercept_ = 0.0;
  std::vector<double> eta_;
  std::vector<double> mu_;
  std::vector<double> scratch_eta_;
  std::vector<double> delta_eta_;
  double lambda_max_ = 0.0;
  double previous_lambda_ = 0.0;
};

SparseGlmFit fit_sparse_glm(const GlmProblem& problem, double lambda,
                            CoordinateDescentOptions options = {});

/// Penalized objective at (intercept, beta), with beta dense over all columns.
double glm_objective(const GlmProblem& problem, double lambda, double intercept,
                     std::span<const double> beta);

/// Largest violation of the L1 optimality conditions (including the
/// unpenalized intercept gradient) at a fit.
double kkt_residual(const GlmProblem& problem, const SparseGlmFit& fit);

}  // namespace obsgrid
