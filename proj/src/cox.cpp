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

#include "obsgrid/cox.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

RiskSetTable RiskSetTable::build(std::span<const SurvivalRecord> data) {
  std::vector<const SurvivalRecord*> order;
  order.reserve(data.size());
  for (const auto& r : data) {
    if (r.follow_up_days < 0) throw ConfigError("follow_up_days must be >= 0");
    order.push_back(&r);
  }
  // Descending time within stratum; at equal time events come first so the
  // risk set accumulated so far already contains everyone tied at that time.
  std::sort(order.begin(), order.end(), [](const SurvivalRecord* a, const SurvivalRecord* b) {
    if (a->stratum != b->stratum) return a->stratum < b->stratum;
    return a->follow_up_days > b->follow_up_days;
  });
  RiskSetTable table;
  std::size_t i = 0;
  while (i < order.size()) {
    const int stratum = order[i]->stratum;
    double n0 = 0, n1 = 0;
    while (i < order.size() && order[i]->stratum == stratum) {
      const int t = order[i]->follow_up_days;
      double d0 = 0, d1 = 0;
      for (; i < order.size() && order[i]->stratum == stratum && order[i]->follow_up_days == t; ++i) {
        (order[i]->treated ? n1 : n0) += 1;
        if (order[i]->event) (order[i]->treated ? d1 : d0) += 1;
      }
      if (d0 + d1 > 0) table.rows.push_back({n0, n1, d0, d1});
    }
  }
  return table;
}

bool RiskSetTable::informative() const {
  for (const auto& r : rows)
    if (r.at_risk_comparator > 0 && r.at_risk_treated > 0) return true;
  return false;
}

double RiskSetTable::log_likelihood(double beta) const {
  double ll = 0;
  for (const auto& r : rows) {
    const double d = r.events_comparator + r.events_treated;
    // log(n0 + n1 e^beta) computed stably
    const double a = std::log(r.at_risk_comparator), b = std::log(r.at_risk_treated) + beta;
    double lse;
    if (r.at_risk_treated == 0) lse = a;
    else if (r.at_risk_comparator == 0) lse = b;
    else lse = std::max(a, b) + std::log1p(std::exp(-std::fabs(a - b)));
    ll += r.events_treated * beta - d * lse;
  }
  return ll;
}

namespace {

double treated_share(const RiskSetTable::Row& r, double beta) {
  if (r.at_risk_treated == 0) return 0.0;
  if (r.at_risk_comparator == 0) return 1.0;
  return expit(beta + std::log(r.at_risk_treated) - std::log(r.at_risk_comparator));
}

}  // namespace

double RiskSetTable::score(double beta) const {
  double u = 0;
  for (const auto& r : rows) {
    const double d = r.events_comparator + r.events_treated;
    u += r.events_treated - d * treated_share(r, beta);
  }
  return u;
}

double RiskSetTable::information(double beta) const {
  double info = 0;
  for (const auto& r : rows) {
    const double d = r.events_comparator + r.events_treated;
    const double s = treated_share(r, beta);
    info += d * s * (1.0 - s);
  }
  return info;
}

ArmCounts count_arms(std::span<const SurvivalRecord> data) {
  ArmCounts c;
  for (const auto& r : data) {
    if (r.treated) {
      ++c.target_subjects;
      c.target_events += r.event ? 1 : 0;
    } else {
      ++c.comparator_subjects;
      c.comparator_events += r.event ? 1 : 0;
    }
  }
  return c;
}

std::pair<double, double> wald_interval(double log_hr, double se, double alpha) {
  if (!(se > 0.0)) throw ConfigError("standard error must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return {std::exp(log_hr - z * se), std::exp(log_hr + z * se)};
}

double wald_p_value(double log_hr, double se) {
  return 2.0 * normal_cdf(-std::fabs(log_hr / se));
}

EffectEstimate fit_stratified_cox(std::span<const SurvivalRecord> data, CoxOptions options) {
  EffectEstimate est;
  est.counts = count_arms(data);
  const auto table = RiskSetTable::build(data);
  if (!table.informative()) {
    est.suppressed_reason = "non-estimable: no stratum with events and both arms at risk";
    return est;
  }
  // A finite maximizer exists iff the (decreasing) score changes sign.
  double score_pos_inf = 0, score_neg_inf = 0;
  for (const auto& r : table.rows) {
    const double d = r.events_comparator + r.events_treated;
    score_pos_inf += r.events_treated - (r.at_risk_treated > 0 ? d : 0.0);
    score_neg_inf += r.events_treated - (r.at_risk_comparator > 0 ? 0.0 : d);
  }
  if (!(score_pos_inf < 0.0 && score_neg_inf > 0.0)) {
    est.suppressed_reason = "non-estimable: monotone likelihood";
    return est;
  }
  double beta = 0.0;
  double ll = table.log_likelihood(beta);
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    const double u = table.score(beta);
    if (std::fabs(u) < options.score_tolerance) {
      converged = true;
      break;
    }
    const double info = table.information(beta);
    if (!(info > 0.0)) break;
    double step = u / info;
    double next = beta + step;
    double next_ll = table.log_likelihood(next);
    for (int halve = 0; halve < 30 && next_ll < ll; ++halve) {
      step *= 0.5;
      next = beta + step;
      next_ll = table.log_likelihood(next);
    }
    beta = next;
    ll = next_ll;
    if (std::fabs(beta) > options.divergence_bound) break;
    if (std::fabs(step) < options.step_tolerance) {
      converged = true;
      break;
    }
  }
  // Quadratic convergence: a few extra steps take beta to machine precision.
  for (int polish = 0; converged && polish < 3; ++polish) {
    const double h = table.information(beta);
    if (!(h > 0.0)) break;
    const double step = table.score(beta) / h;
    beta += step;
    if (std::fabs(step) < 1e-15) break;
  }
  const double info = table.information(beta);
  if (!converged || std::fabs(beta) > options.divergence_bound || !(info > 0.0)) {
    est.suppressed_reason = "non-estimable: monotone likelihood";
    return est;
  }
  est.estimable = true;
  est.log_hr = beta;
  est.se_log_hr = std::sqrt(1.0 / info);
  est.hr = std::exp(beta);
  est.ci95 = wald_interval(beta, est.se_log_hr, 0.05);
  est.p = wald_p_value(beta, est.se_log_hr);
  return est;
}

}  // namespace obsgrid
