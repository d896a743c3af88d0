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

#include "obsgrid/glm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

std::vector<double> SparseGlmFit::dense_coefficients(std::size_t n_cols) const {
  std::vector<double> beta(n_cols, 0.0);
  for (const auto& [j, b] : coefficients) beta.at(j) = b;
  return beta;
}

std::vector<double> SparseGlmFit::linear_predictor(const SparseCovariateMatrix& x) const {
  std::vector<double> eta(x.rows(), intercept);
  for (const auto& [j, b] : coefficients) {
    auto rows = x.column_rows(j);
    auto vals = x.column_values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) eta[rows[k]] += b * vals[k];
  }
  return eta;
}

namespace {

constexpr double kArmijo = 0.01;
constexpr int kMaxHalvings = 40;
constexpr double kMinCurvature = 1e-12;
// Keeps exp() finite in the Poisson line search.
constexpr double kMaxEta = 700.0;

double pointwise_loss(GlmFamily f, double eta, double y) {
  if (f == GlmFamily::logistic) return log1p_exp(eta) - y * eta;
  return std::exp(std::min(eta, kMaxEta)) - y * eta;
}

double pointwise_mean(GlmFamily f, double eta) {
  return f == GlmFamily::logistic ? expit(eta) : std::exp(std::min(eta, kMaxEta));
}

// Ties within rounding of the threshold stay at zero, so lambda = lambda_max gives the null model.
double soft_threshold(double z, double t) {
  if (std::fabs(z) <= t * (1.0 + 1e-12)) return 0.0;
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

CoordinateDescent::CoordinateDescent(const GlmProblem& problem, CoordinateDescentOptions options)
    : p_(problem), opt_(options) {
  if (p_.x == nullptr) throw ConfigError("GLM problem without a design matrix");
  n_ = p_.x->rows();
  if (p_.y.size() != n_) throw ConfigError("response length does not match matrix rows");
  if (!p_.offset.empty() && p_.offset.size() != n_) throw ConfigError("offset length mismatch");
  if (!p_.weights.empty() && p_.weights.size() != n_) throw ConfigError("weights length mismatch");
  w_.assign(n_, 1.0);
  if (!p_.weights.empty()) std::copy(p_.weights.begin(), p_.weights.end(), w_.begin());

  double sw = 0, swy = 0, swe = 0;
  bool has_zero = false, has_one = false;
  for (std::size_t i = 0; i < n_; ++i) {
    if (w_[i] < 0 || !std::isfinite(w_[i])) throw ConfigError("weights must be finite and >= 0");
    if (w_[i] == 0) continue;
    sw += w_[i];
    swy += w_[i] * p_.y[i];
    swe += w_[i] * std::exp(p_.offset.empty() ? 0.0 : p_.offset[i]);
    if (p_.family == GlmFamily::logistic) {
      if (p_.y[i] == 0.0) has_zero = true;
      else if (p_.y[i] == 1.0) has_one = true;
      else throw ConfigError("logistic response must be 0 or 1");
    } else if (p_.y[i] < 0) {
      throw ConfigError("Poisson response must be >= 0");
    }
  }
  if (sw <= 0) throw DegenerateFitError("no rows with positive weight");
  if (p_.family == GlmFamily::logistic && !(has_zero && has_one))
    throw DegenerateFitError("logistic fit needs both labels");
  if (p_.family == GlmFamily::poisson && swy <= 0)
    throw DegenerateFitError("Poisson fit needs at least one event");
  weight_total_ = sw;
  intercept_ = p_.family == GlmFamily::logistic ? logit(swy / sw) : std::log(swy / swe);

  beta_.assign(p_.x->cols(), 0.0);
  eta_.resize(n_);
  mu_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    eta_[i] = intercept_ + (p_.offset.empty() ? 0.0 : p_.offset[i]);
    mu_[i] = mean(eta_[i]);
  }
  scratch_eta_.resize(n_);
  delta_eta_.resize(n_);

  for (std::size_t j = 0; j < p_.x->cols(); ++j) {
    auto rows = p_.x->column_rows(j);
    auto vals = p_.x->column_values(j);
    double g = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = rows[k];
      g += w_[i] * vals[k] * (mu_[i] - p_.y[i]);
    }
    lambda_max_ = std::max(lambda_max_, std::fabs(g) / weight_total_);
  }
}

double CoordinateDescent::loss(double eta, double y) const { return pointwise_loss(p_.family, eta, y); }
double CoordinateDescent::mean(double eta) const { return pointwise_mean(p_.family, eta); }
double CoordinateDescent::variance(double mu) const {
  return p_.family == GlmFamily::logistic ? mu * (1.0 - mu) : mu;
}

double CoordinateDescent::objective_at(std::span<const double> eta, double penalty) const {
  double total = 0;
  for (std::size_t i = 0; i < n_; ++i)
    if (w_[i] != 0.0) total += w_[i] * loss(eta[i], p_.y[i]);
  return total / weight_total_ + penalty;
}

std::vector<double> CoordinateDescent::gradient() const {
  std::vector<double> g(beta_.size(), 0.0);
  for (std::size_t j = 0; j < beta_.size(); ++j) {
    auto rows = p_.x->column_rows(j);
    auto vals = p_.x->column_values(j);
    double s = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = rows[k];
      s += w_[i] * vals[k] * (mu_[i] - p_.y[i]);
    }
    g[j] = s / weight_total_;
  }
  return g;
}

double CoordinateDescent::newton_step(const std::vector<std::size_t>& working, double lambda) {
  const std::size_t m = working.size();
  // Quadratic model: 0.5 * sum_i a_i (z_i - b0 - x_i.beta)^2 with
  // a_i = w_i v_i / W and a_i z_i = (w_i / W) (v_i eta'_i + y_i - mu_i).
  std::vector<double> a(n_), az(n_);
  double a_sum = 0, az_sum = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    if (w_[i] == 0.0) continue;
    const double v = variance(mu_[i]);
    const double eta_fit = eta_[i] - (p_.offset.empty() ? 0.0 : p_.offset[i]);
    a[i] = w_[i] * v / weight_total_;
    az[i] = w_[i] * (v * eta_fit + p_.y[i] - mu_[i]) / weight_total_;
    a_sum += a[i];
    az_sum += az[i];
  }
  if (!(a_sum > kMinCurvature)) return -1.0;

  // Row-wise view of the working columns for the Gram matrix.
  std::vector<std::size_t> row_count(n_ + 1, 0);
  for (std::size_t l = 0; l < m; ++l)
    for (auto i : p_.x->column_rows(working[l])) ++row_count[i + 1];
  for (std::size_t i = 0; i < n_; ++i) row_count[i + 1] += row_count[i];
  std::vector<std::uint32_t> row_col(row_count[n_]);
  std::vector<double> row_val(row_count[n_]);
  {
    std::vector<std::size_t> fill(row_count.begin(), row_count.end() - 1);
    for (std::size_t l = 0; l < m; ++l) {
      auto rows = p_.x->column_rows(working[l]);
      auto vals = p_.x->column_values(working[l]);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        row_col[fill[rows[k]]] = static_cast<std::uint32_t>(l);
        row_val[fill[rows[k]]++] = vals[k];
      }
    }
  }
  std::vector<double> gram(m * m, 0.0), col_mean(m, 0.0), col_z(m, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    if (a[i] == 0.0 && az[i] == 0.0) continue;
    for (std::size_t u = row_count[i]; u < row_count[i + 1]; ++u) {
      const std::size_t j = row_col[u];
      const double xa = row_val[u] * a[i];
      col_mean[j] += xa;
      col_z[j] += row_val[u] * az[i];
      for (std::size_t v = row_count[i]; v <= u; ++v) gram[j * m + row_col[v]] += xa * row_val[v];
    }
  }
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < j; ++k) gram[k * m + j] = gram[j * m + k];

  // Coordinate descent on the penalized quadratic, q = gram * beta.
  std::vector<double> b(m), q(m, 0.0);
  for (std::size_t l = 0; l < m; ++l) b[l] = beta_[working[l]];
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) q[j] += gram[j * m + k] * b[k];
  double b0 = intercept_;
  auto mean_dot = [&] {
    double s = 0;
    for (std::size_t l = 0; l < m; ++l) s += col_mean[l] * b[l];
    return s;
  };
  for (int sweep = 0; sweep < 100000; ++sweep) {
    const double new_b0 = (az_sum - mean_dot()) / a_sum;
    double change = std::fabs(new_b0 - b0);
    b0 = new_b0;
    for (std::size_t j = 0; j < m; ++j) {
      const double gjj = gram[j * m + j];
      if (!(gjj > kMinCurvature)) continue;
      const double rho = col_z[j] - col_mean[j] * b0 - (q[j] - gjj * b[j]);
      const double next = soft_threshold(rho, lambda) / gjj;
      const double d = next - b[j];
      if (d == 0.0) continue;
      b[j] = next;
      for (std::size_t k = 0; k < m; ++k) q[k] += d * gram[k * m + j];
      change = std::max(change, std::fabs(d));
    }
    if (change < 1e-3 * opt_.coord_tolerance) break;
  }

  // Backtracking on the exact objective along the model step.
  const double d0 = b0 - intercept_;
  std::vector<double> d(m);
  double max_move = std::fabs(d0);
  for (std::size_t l = 0; l < m; ++l) {
    d[l] = b[l] - beta_[working[l]];
    max_move = std::max(max_move, std::fabs(d[l]));
  }
  if (max_move == 0.0) return 0.0;
  std::fill(delta_eta_.begin(), delta_eta_.end(), d0);
  for (std::size_t l = 0; l < m; ++l) {
    if (d[l] == 0.0) continue;
    auto rows = p_.x->column_rows(working[l]);
    auto vals = p_.x->column_values(working[l]);
    for (std::size_t k = 0; k < rows.size(); ++k) delta_eta_[rows[k]] += d[l] * vals[k];
  }
  double penalty_now = 0;
  for (double v : beta_) penalty_now += std::fabs(v);
  penalty_now *= lambda;
  double slope = 0;  // directional derivative bound of the smooth part plus penalty change
  for (std::size_t i = 0; i < n_; ++i)
    if (w_[i] != 0.0) slope += w_[i] * (mu_[i] - p_.y[i]) * delta_eta_[i];
  slope /= weight_total_;
  double penalty_full = penalty_now;
  for (std::size_t l = 0; l < m; ++l)
    penalty_full += lambda * (std::fabs(b[l]) - std::fabs(beta_[working[l]]));
  const double predicted = slope + (penalty_full - penalty_now);
  const double f0 = objective_at(eta_, penalty_now);

  double t = 1.0;
  for (int attempt = 0; attempt < kMaxHalvings; ++attempt, t *= 0.5) {
    for (std::size_t i = 0; i < n_; ++i) scratch_eta_[i] = eta_[i] + t * delta_eta_[i];
    double penalty = penalty_now;
    for (std::size_t l = 0; l < m; ++l) {
      const double old = beta_[working[l]];
      penalty += lambda * (std::fabs(old + t * d[l]) - std::fabs(old));
    }
    const double f = objective_at(scratch_eta_, penalty);
    if (f <= f0 + kArmijo * t * std::min(predicted, 0.0)) {
      intercept_ += t * d0;
      for (std::size_t l = 0; l < m; ++l) {
        double& coef = beta_[working[l]];
        coef = t == 1.0 ? b[l] : coef + t * d[l];
      }
      std::swap(eta_, scratch_eta_);
      for (std::size_t i = 0; i < n_; ++i) mu_[i] = mean(eta_[i]);
      return t * max_move;
    }
  }
  return -1.0;
}

SparseGlmFit CoordinateDescent::snapshot(double lambda, bool converged, int iterations) const {
  SparseGlmFit fit;
  fit.intercept = intercept_;
  fit.lambda = lambda;
  fit.converged = converged;
  fit.iterations = iterations;
  for (std::size_t j = 0; j < beta_.size(); ++j)
    if (beta_[j] != 0.0) fit.coefficients.emplace_back(j, beta_[j]);
  return fit;
}

SparseGlmFit CoordinateDescent::fit(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  const std::size_t p = beta_.size();
  const double reference = previous_lambda_ > 0.0 ? previous_lambda_ : lambda_max_;
  previous_lambda_ = lambda;

  std::vector<char> in_set(p, 0);
  {
    const auto g = gradient();
    for (std::size_t j = 0; j < p; ++j)
      if (beta_[j] != 0.0 || std::fabs(g[j]) >= 2.0 * lambda - reference) in_set[j] = 1;
  }
  int iterations = 0;
  bool converged = false;
  while (iterations < opt_.max_iterations) {
    std::vector<std::size_t> working;
    for (std::size_t j = 0; j < p; ++j)
      if (in_set[j]) working.push_back(j);
    bool settled = false;
    while (iterations < opt_.max_iterations) {
      ++iterations;
      const double move = newton_step(working, lambda);
      if (move < opt_.coord_tolerance) {
        settled = true;
        break;
      }
    }
    if (!settled) break;
    const auto g = gradient();
    bool added = false;
    for (std::size_t j = 0; j < p; ++j)
      if (!in_set[j] && std::fabs(g[j]) > lambda) {
        in_set[j] = 1;
        added = true;
      }
    if (!added) {
      converged = true;
      break;
    }
  }
  return snapshot(lambda, converged, iterations);
}

SparseGlmFit fit_sparse_glm(const GlmProblem& problem, double lambda, CoordinateDescentOptions options) {
  return CoordinateDescent(problem, options).fit(lambda);
}

namespace {

std::vector<double> problem_eta(const GlmProblem& p, double intercept, std::span<const double> beta) {
  const auto& x = *p.x;
  if (beta.size() != x.cols()) throw ConfigError("coefficient vector length mismatch");
  std::vector<double> eta(x.rows(), intercept);
  if (!p.offset.empty())
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] += p.offset[i];
  for (std::size_t j = 0; j < x.cols(); ++j) {
    if (beta[j] == 0.0) continue;
    auto rows = x.column_rows(j);
    auto vals = x.column_values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) eta[rows[k]] += beta[j] * vals[k];
  }
  return eta;
}

double weight_of(const GlmProblem& p, std::size_t i) { return p.weights.empty() ? 1.0 : p.weights[i]; }

}  // namespace

double glm_objective(const GlmProblem& problem, double lambda, double intercept,
                     std::span<const double> beta) {
  const auto eta = problem_eta(problem, intercept, beta);
  double total = 0, sw = 0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const double w = weight_of(problem, i);
    if (w == 0.0) continue;
    sw += w;
    total += w * pointwise_loss(problem.family, eta[i], problem.y[i]);
  }
  double penalty = 0;
  for (double b : beta) penalty += std::fabs(b);
  return total / sw + lambda * penalty;
}

double kkt_residual(const GlmProblem& problem, const SparseGlmFit& fit) {
  const auto& x = *problem.x;
  const auto beta = fit.dense_coefficients(x.cols());
  const auto eta = problem_eta(problem, fit.intercept, beta);
  std::vector<double> resid(eta.size());
  double sw = 0, g0 = 0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const double w = weight_of(problem, i);
    sw += w;
    resid[i] = w * (pointwise_mean(problem.family, eta[i]) - problem.y[i]);
    g0 += resid[i];
  }
  double worst = std::fabs(g0 / sw);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    auto rows = x.column_rows(j);
    auto vals = x.column_values(j);
    double g = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) g += vals[k] * resid[rows[k]];
    g /= sw;
    const double v = beta[j] == 0.0 ? std::max(0.0, std::fabs(g) - fit.lambda)
                                     : std::fabs(g + fit.lambda * (beta[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace obsgrid
