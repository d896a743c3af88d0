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

#include "obsgrid/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

double SystematicErrorModel::bias_sd(double theta) const { return std::exp(c + d * theta); }

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

using Params = std::array<double, 4>;

SystematicErrorModel to_model(const Params& p) { return {p[0], p[1], p[2], p[3]}; }

/// Mean log likelihood and its gradient with respect to (a, b, c, d).
double objective(std::span<const ControlEstimate> controls, const Params& p, Params* grad) {
  double ll = 0.0;
  Params g{};
  for (const auto& x : controls) {
    const double theta = x.true_log_hr;
    const double r = x.log_hr - theta - p[0] - p[1] * theta;
    const double bias_var = std::exp(2.0 * (p[2] + p[3] * theta));
    const double v = bias_var + x.se * x.se;
    ll += -0.5 * (kLog2Pi + std::log(v)) - 0.5 * r * r / v;
    g[0] += r / v;
    g[1] += theta * r / v;
    const double dv = 0.5 * (r * r / (v * v) - 1.0 / v);
    g[2] += dv * 2.0 * bias_var;
    g[3] += dv * 2.0 * theta * bias_var;
  }
  const double n = static_cast<double>(controls.size());
  for (auto& gi : g) gi /= n;
  if (grad) *grad = g;
  return ll / n;
}

/// Maps the free coordinates (a, c) or (a, b, c, d) onto the parameter vector.
std::array<std::size_t, 4> free_coordinates(bool slopes) {
  return slopes ? std::array<std::size_t, 4>{0, 1, 2, 3} : std::array<std::size_t, 4>{0, 2, 0, 0};
}

double sup_norm_free(const Params& g, const std::array<std::size_t, 4>& coord, std::size_t dim) {
  double m = 0.0;
  for (std::size_t i = 0; i < dim; ++i) m = std::max(m, std::abs(g[coord[i]]));
  return m;
}

}  // namespace

double error_model_log_likelihood(std::span<const ControlEstimate> controls,
                                  const SystematicErrorModel& model) {
  return objective(controls, {model.a, model.b, model.c, model.d}, nullptr);
}

std::optional<SystematicErrorModel> fit_error_model(std::span<const ControlEstimate> controls,
                                                   const ErrorModelOptions& options) {
  std::vector<ControlEstimate> usable;
  for (const auto& x : controls)
    if (std::isfinite(x.log_hr) && std::isfinite(x.true_log_hr) && x.se > 0 && std::isfinite(x.se))
      usable.push_back(x);
  if (usable.size() < options.minimum_controls || usable.empty()) return std::nullopt;

  std::set<double> truths;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t negatives = 0;
  for (const auto& x : usable) {
    truths.insert(x.true_log_hr);
    if (x.true_log_hr == 0.0) {
      const double r = x.log_hr;
      sum += r;
      sum_sq += r * r;
      ++negatives;
    }
  }
  const bool slopes = truths.size() >= 2;
  const std::size_t dim = slopes ? 4 : 2;
  const auto coord = free_coordinates(slopes);

  Params p{};
  if (negatives > 0) {
    const double mean = sum / negatives;
    const double var = negatives > 1 ? (sum_sq - negatives * mean * mean) / (negatives - 1) : 0.0;
    p[0] = mean;
    p[2] = std::log(std::max(std::sqrt(std::max(var, 0.0)), 1e-3));
  } else {
    p[2] = std::log(0.1);
  }

  // BFGS ascent on the free coordinates with an Armijo backtracking line search.
  Params grad;
  double f = objective(usable, p, &grad);
  std::vector<double> h(dim * dim, 0.0);  // inverse Hessian approximation of -f
  for (std::size_t i = 0; i < dim; ++i) h[i * dim + i] = 1.0;
  int iter = 0;
  bool converged = sup_norm_free(grad, coord, dim) < options.gradient_tolerance;
  while (!converged && iter < options.max_iterations) {
    ++iter;
    std::array<double, 4> g{}, dir{};
    for (std::size_t i = 0; i < dim; ++i) g[i] = grad[coord[i]];
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) dir[i] += h[i * dim + j] * g[j];
    double slope = 0.0;
    for (std::size_t i = 0; i < dim; ++i) slope += dir[i] * g[i];
    if (!(slope > 0.0)) {
      // Lost ascent direction: restart from steepest ascent.
      std::fill(h.begin(), h.end(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) h[i * dim + i] = 1.0;
      dir = g;
      slope = 0.0;
      for (std::size_t i = 0; i < dim; ++i) slope += g[i] * g[i];
    }
    double step = 1.0;
    Params trial = p, trial_grad{};
    double f_trial = -std::numeric_limits<double>::infinity();
    for (int halving = 0; halving < 60; ++halving) {
      trial = p;
      for (std::size_t i = 0; i < dim; ++i) trial[coord[i]] += step * dir[i];
      f_trial = objective(usable, trial, &trial_grad);
      if (std::isfinite(f_trial) && f_trial >= f + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    if (!(std::isfinite(f_trial) && f_trial >= f)) break;
    std::array<double, 4> s{}, y{};
    for (std::size_t i = 0; i < dim; ++i) {
      s[i] = trial[coord[i]] - p[coord[i]];
      y[i] = -(trial_grad[coord[i]] - grad[coord[i]]);  // gradient of -f
    }
    p = trial;
    grad = trial_grad;
    const double f_prev = f;
    f = f_trial;
    converged = sup_norm_free(grad, coord, dim) < options.gradient_tolerance;
    if (!converged && f - f_prev == 0.0 && step < 1e-12) break;
    double sy = 0.0;
    for (std::size_t i = 0; i < dim; ++i) sy += s[i] * y[i];
    if (sy > 1e-16) {
      std::array<double, 4> hy{};
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) hy[i] += h[i * dim + j] * y[j];
      double yhy = 0.0;
      for (std::size_t i = 0; i < dim; ++i) yhy += y[i] * hy[i];
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
          h[i * dim + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
    }
  }
  auto model = to_model(p);
  model.fitted_on = usable.size();
  model.converged = converged;
  model.iterations = iter;
  return model;
}

CalibratedInterval calibrate_ci(double log_hr, double se, const SystematicErrorModel& model,
                                double alpha) {
  if (!(se > 0.0) || !std::isfinite(se)) throw ConfigError("calibrate_ci: se must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("calibrate_ci: alpha must be in (0, 1]");
  CalibratedInterval out;
  if (!std::isfinite(log_hr)) {
    out.failure = "non-finite estimate";
    return out;
  }
  const double lo = log_hr - 20.0, hi = log_hr + 20.0;
  if (!(1.0 + model.b > 0.0)) {
    out.failure = "error model slope makes the interval non-monotone";
    return out;
  }
  auto z = [&](double theta) {
    const double var = std::exp(2.0 * (model.c + model.d * theta)) + se * se;
    return (log_hr - theta - model.a - model.b * theta) / std::sqrt(var);
  };
  // z vanishes at the centre, grows to the left and falls to the right of
  // it. With a nonzero SD slope it can turn back far away, so each root is
  // the crossing nearest the centre: scan outward, then bisect.
  const double centre = (log_hr - model.a) / (1.0 + model.b);
  if (!(centre > lo && centre < hi)) {
    out.failure = "interval centre outside the search bracket";
    return out;
  }
  const double zq = normal_quantile(1.0 - alpha / 2.0);
  auto root = [&](double direction, double target) -> std::optional<double> {
    if (target == 0.0) return centre;
    constexpr double kScanStep = 0.01;
    const double limit = direction < 0 ? lo : hi;
    double inner = centre;
    for (int k = 1;; ++k) {
      double outer = centre + direction * k * kScanStep;
      if ((direction < 0 && outer < limit) || (direction > 0 && outer > limit)) outer = limit;
      const double f = z(outer) - target;
      if ((direction < 0 && f >= 0.0) || (direction > 0 && f <= 0.0)) {
        double a = std::min(inner, outer), b = std::max(inner, outer);
        while (b - a > 1e-8) {
          const double m = 0.5 * (a + b);
          const bool beyond = direction < 0 ? z(m) - target >= 0.0 : z(m) - target <= 0.0;
          // "beyond" points lie on the outer side of the crossing.
          if (beyond == (direction < 0))
            a = m;
          else
            b = m;
        }
        return 0.5 * (a + b);
      }
      if (outer == limit) return std::nullopt;
      inner = outer;
    }
  };
  const auto lower = root(-1.0, zq);
  const auto upper = root(1.0, -zq);
  if (!lower || !upper) {
    out.failure = "no sign change in the search bracket";
    return out;
  }
  if (*lower > *upper) {
    out.failure = "calibrated bounds out of order";
    return out;
  }
  out.ci = std::pair{std::exp(*lower), std::exp(*upper)};
  return out;
}

double calibrated_p_value(double log_hr, double se, const SystematicErrorModel& model) {
  // At theta = 0 the slope terms vanish, so the touching level is closed form.
  const double sd = std::sqrt(std::exp(2.0 * model.c) + se * se);
  return 2.0 * (1.0 - normal_cdf(std::abs(log_hr - model.a) / sd));
}

bool apply_calibration(EffectEstimate& estimate, const SystematicErrorModel& model) {
  if (!estimate.estimable) return false;
  const auto ci = calibrate_ci(estimate.log_hr, estimate.se_log_hr, model);
  if (!ci.ci) return false;
  estimate.calibrated_ci95 = ci.ci;
  estimate.calibrated_p = calibrated_p_value(estimate.log_hr, estimate.se_log_hr, model);
  return true;
}

double coverage(std::span<const IntervalWithTruth> intervals) {
  if (intervals.empty()) throw ConfigError("coverage of an empty set");
  std::size_t covered = 0;
  for (const auto& i : intervals)
    if (i.lb <= i.true_hr && i.true_hr <= i.ub) ++covered;
  return static_cast<double>(covered) / static_cast<double>(intervals.size());
}

CoverageCurve loo_cross_validate(std::span<const ControlEstimate> controls,
                                 std::span<const double> levels, const ErrorModelOptions& options) {
  for (double level : levels)
    if (!(level >= 0.0 && level < 1.0)) throw ConfigError("interval levels must lie in [0, 1)");
  std::map<std::int64_t, std::vector<ControlEstimate>> groups;
  for (const auto& x : controls) groups[x.parent_negative].push_back(x);
  if (groups.size() < 2) throw ConfigError("leave-one-out needs at least 2 control groups");

  CoverageCurve curve;
  curve.levels.assign(levels.begin(), levels.end());
  std::map<double, std::vector<std::size_t>> covered;
  std::vector<std::size_t> pooled_covered(levels.size(), 0);
  std::size_t pooled_total = 0;
  for (const auto& [parent, held_out] : groups) {
    std::vector<ControlEstimate> training;
    for (const auto& [other, members] : groups)
      if (other != parent) training.insert(training.end(), members.begin(), members.end());
    const auto model = fit_error_model(training, options);
    ++curve.model_fits;
    if (!model) {
      ++curve.unavailable_folds;
      continue;
    }
    for (const auto& x : held_out) {
      if (!(x.se > 0.0) || !std::isfinite(x.log_hr)) continue;
      const double true_hr = std::exp(x.true_log_hr);
      auto& hits = covered[true_hr];
      hits.resize(levels.size(), 0);
      ++curve.controls_by_true_hr[true_hr];
      ++pooled_total;
      for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto ci = calibrate_ci(x.log_hr, x.se, *model, 1.0 - levels[l]);
        if (ci.ci && ci.ci->first <= true_hr && true_hr <= ci.ci->second) {
          ++hits[l];
          ++pooled_covered[l];
        }
      }
    }
  }
  curve.evaluated_controls = pooled_total;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [true_hr, hits] : covered) {
    auto& row = curve.by_true_hr[true_hr];
    const double n = static_cast<double>(curve.controls_by_true_hr[true_hr]);
    for (std::size_t l = 0; l < levels.size(); ++l) row.push_back(n > 0 ? hits[l] / n : nan);
  }
  for (std::size_t l = 0; l < levels.size(); ++l)
    curve.pooled.push_back(pooled_total ? static_cast<double>(pooled_covered[l]) / pooled_total : nan);
  return curve;
}

}  // namespace obsgrid
