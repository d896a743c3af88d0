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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "obsgrid/store.hpp"

namespace obsgrid {

struct I2Result {
  double q = 0.0;
  double i2 = 0.0;
  std::size_t k = 0;
};

/// Cochran's Q and I^2 = max(0, (Q - (k - 1)) / Q), 0 when Q = 0, from
/// (log_hr, se) pairs. nullopt when fewer than 2 estimates are given.
/// Throws ConfigError for non-finite values or se <= 0.
std::optional<I2Result> compute_i2(std::span<const std::pair<double, double>> estimates);

/// SE implied by a 95% interval on the HR scale.
double se_from_interval(double lb, double ub);

struct TripletI2 {
  std::string analysis;
  DrugId target = 0;
  DrugId comparator = 0;
  ConditionId outcome = 0;
  double i2 = 0.0;
};

struct I2Summary {
  std::vector<TripletI2> triplets;
  std::vector<double> bin_edges;      // 11 edges, width 0.1
  std::vector<std::size_t> histogram;  // 10 bins; the last bin includes 1
  double share_below_025 = 0.0;        // NaN without triplets
};

/// I^2 for every (analysis, target, comparator, outcome) estimated in every
/// database of the store (at least 2). Calibrated mode uses the calibrated
/// interval centre and its implied SE, skipping triplets lacking one.
I2Summary i2_summary(const ResultStore& store, bool calibrated, bool include_controls = false);

struct TransitivityTriplet {
  DrugId a = 0;
  DrugId b = 0;
  DrugId c = 0;
  ConditionId outcome = 0;
  bool holds = false;
};

struct TransitivityResult {
  std::vector<TransitivityTriplet> triplets;  // ordered by (a, b, c, outcome)
  std::size_t qualifying = 0;
  std::size_t holding = 0;
  double fraction = 0.0;  // NaN when nothing qualifies
};

/// A-B-C-O qualifies when the calibrated A-vs-B and B-vs-C intervals lie
/// strictly above 1 and A-vs-C is estimable; it holds when the calibrated
/// A-vs-C interval also lies strictly above 1. Control outcomes are ignored.
/// Levels other than alpha = 0.05 recalibrate with the stored error models.
TransitivityResult transitivity_audit(const ResultStore& store, const std::string& database,
                                      const std::string& analysis, double alpha = 0.05);

}  // namespace obsgrid
