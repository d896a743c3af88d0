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

#include "obsgrid/heterogeneity.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "obsgrid/calibration.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::optional<I2Result> compute_i2(std::span<const std::pair<double, double>> estimates) {
  for (const auto& [y, se] : estimates)
    if (!std::isfinite(y) || !(se > 0.0) || !std::isfinite(se))
      throw ConfigError("I2 needs finite estimates with se > 0");
  if (estimates.size() < 2) return std::nullopt;
  double sw = 0.0, swy = 0.0;
  for (const auto& [y, se] : estimates) {
    const double w = 1.0 / (se * se);
    sw += w;
    swy += w * y;
  }
  const double mean = swy / sw;
  double q = 0.0;
  for (const auto& [y, se] : estimates) q += (y - mean) * (y - mean) / (se * se);
  I2Result r;
  r.q = q;
  r.k = estimates.size();
  const double df = static_cast<double>(r.k - 1);
  r.i2 = q > 0.0 ? std::max(0.0, (q - df) / q) : 0.0;
  return r;
}

double se_from_interval(double lb, double ub) {
  return (std::log(ub) - std::log(lb)) / (2.0 * kZ95);
}

I2Summary i2_summary(const ResultStore& store, bool calibrated, bool include_controls) {
  I2Summary s;
  for (int i = 0; i <= 10; ++i) s.bin_edges.push_back(i / 10.0);
  s.histogram.assign(10, 0);
  const auto databases = store.databases();
  using Triplet = std::tuple<std::string, DrugId, DrugId, ConditionId>;
  std::map<Triplet, std::vector<std::pair<double, double>>> inputs;
  for (const auto* r : store.records()) {
    if (r->is_control && !include_controls) continue;
    const auto& e = r->estimate;
    if (!e.estimable) continue;
    std::pair<double, double> value{e.log_hr, e.se_log_hr};
    if (calibrated) {
      if (!e.calibrated_ci95) continue;
      const auto [lb, ub] = *e.calibrated_ci95;
      value = {0.5 * (std::log(lb) + std::log(ub)), se_from_interval(lb, ub)};
      if (!(value.second > 0.0)) continue;
    } else if (!(value.second > 0.0)) {
      continue;
    }
    inputs[{r->key.analysis, r->key.target, r->key.comparator, r->key.outcome}].push_back(value);
  }
  if (databases.size() >= 2) {
    for (const auto& [t, values] : inputs) {
      if (values.size() != databases.size()) continue;
      const auto i2 = compute_i2(values);
      s.triplets.push_back({std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t), i2->i2});
    }
  }
  std::size_t below = 0;
  for (const auto& t : s.triplets) {
    s.histogram[std::min<std::size_t>(static_cast<std::size_t>(t.i2 * 10.0), 9)]++;
    if (t.i2 < 0.25) ++below;
  }
  s.share_below_025 = s.triplets.empty() ? kNaN : static_cast<double>(below) / s.triplets.size();
  return s;
}

TransitivityResult transitivity_audit(const ResultStore& store, const std::string& database,
                                      const std::string& analysis, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  const bool stored_level = std::abs(alpha - 0.05) < 1e-12;
  std::set<DrugId> drugs;
  std::set<ConditionId> outcomes;
  for (const auto* r : store.records())
    if (r->key.database == database && r->key.analysis == analysis && !r->is_control) {
      drugs.insert(r->key.target);
      drugs.insert(r->key.comparator);
      outcomes.insert(r->key.outcome);
    }

  auto calibrated_interval = [&](DrugId t, DrugId c, ConditionId o) -> std::optional<std::pair<double, double>> {
    const auto* r = store.find({database, analysis, t, c, o});
    if (!r || !r->estimate.estimable) return std::nullopt;
    if (stored_level) return r->estimate.calibrated_ci95;
    const auto it = store.error_models().find({database, analysis, t, c});
    if (it == store.error_models().end() || !it->second.model) return std::nullopt;
    return calibrate_ci(r->estimate.log_hr, r->estimate.se_log_hr, *it->second.model, alpha).ci;
  };
  auto above_one = [](const std::optional<std::pair<double, double>>& ci) {
    return ci && ci->first > 1.0;
  };

  TransitivityResult result;
  for (auto a : drugs)
    for (auto b : drugs)
      for (auto c : drugs) {
        if (a == b || b == c || a == c) continue;
        for (auto o : outcomes) {
          if (!above_one(calibrated_interval(a, b, o)) || !above_one(calibrated_interval(b, c, o)))
            continue;
          const auto* ac = store.find({database, analysis, a, c, o});
          if (!ac || !ac->estimate.estimable) continue;
          const bool holds = above_one(calibrated_interval(a, c, o));
          result.triplets.push_back({a, b, c, o, holds});
          ++result.qualifying;
          if (holds) ++result.holding;
        }
      }
  result.fraction =
      result.qualifying ? static_cast<double>(result.holding) / result.qualifying : kNaN;
  return result;
}

}  // namespace obsgrid
