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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "obsgrid/cohorts.hpp"
#include "obsgrid/controls.hpp"
#include "obsgrid/cox.hpp"
#include "obsgrid/covariates.hpp"
#include "obsgrid/errors.hpp"
#include "obsgrid/psmodel.hpp"
#include "obsgrid/synth.hpp"
#include "oracles.hpp"

using namespace obsgrid;

namespace {

SparseCovariateMatrix dense_matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), p = n ? rows[0].size() : 0;
  std::vector<CovariateColumn> cols;
  for (std::size_t j = 0; j < p; ++j)
    cols.push_back({static_cast<std::int64_t>(j + 1), "x", CovariateClass::condition, false});
  std::vector<MatrixEntry> entries;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      if (rows[i][j] != 0.0) entries.push_back({i, j, rows[i][j]});
  return SparseCovariateMatrix::from_entries(n, cols, entries);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = 0.5 * (i + j - 1);
    i = j;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// A negative-control question on a simulated database, prepared up to injection.
struct Question {
  PatientDatabase db;
  CohortPair pair;
  SparseCovariateMatrix x;
  std::vector<int> stratum;
  std::vector<RiskWindow> windows;  // all subjects, target first
  OutcomeRateModel rate_model;
  std::vector<double> target_rates;

  explicit Question(std::size_t persons, std::uint64_t seed) {
    SimConfig c;
    c.n_persons = persons;
    c.n_outcomes = 2;
    c.n_baseline_covariates = 10;
    c.baseline_hazard_per_day = 3e-4;
    c.rng_seed = seed;
    db = generate_database(c);
    pair = build_cohort_pair(db, 1, 2, ConditionId{1}, CohortCriteria{});
    x = filter_low_prevalence(extract_covariates(db, pair, 365), 50);
    std::vector<int> label;
    for (std::size_t i = 0; i < pair.size(); ++i) label.push_back(i < pair.target_subjects.size());
    PropensityOptions ps;
    ps.n_folds = 5;
    ps.n_lambdas = 10;
    const auto model = fit_propensity_model(x, label, ps, seed);
    stratum = stratify(model.scores, 5).stratum_of;
    const TimeAtRiskPolicy policy{TimeAtRiskKind::on_treatment, 30};
    std::vector<double> events, days;
    auto add = [&](const Subject& s, DrugId drug) {
      const auto w = risk_window(db, s, drug, policy);
      windows.push_back(w);
      const auto f = follow_up(w, first_outcome_from(db, s.person_index, 1, s.index_day));
      events.push_back(f.event ? 1.0 : 0.0);
      days.push_back(f.follow_up_days);
    };
    for (const auto& s : pair.target_subjects) add(s, 1);
    for (const auto& s : pair.comparator_subjects) add(s, 2);
    std::vector<double> weights(days.size());
    for (std::size_t i = 0; i < days.size(); ++i) weights[i] = days[i] > 0 ? 1.0 : 0.0;
    rate_model = fit_outcome_rate_model_at_ratio(x, events, days, 0.01, {}, weights);
    const auto rates = rate_model.rates(x);
    target_rates.assign(rates.begin(), rates.begin() + pair.target_subjects.size());
  }

  std::span<const RiskWindow> target_windows() const {
    return std::span(windows).first(pair.target_subjects.size());
  }

  EffectEstimate estimate(const InjectionResult& r) const {
    std::vector<SurvivalRecord> data;
    const std::size_t nt = pair.target_subjects.size();
    for (std::size_t i = 0; i < pair.size(); ++i) {
      const auto& first = i < nt ? r.target_first_event[i] : r.comparator_first_event[i - nt];
      const auto f = follow_up(windows[i], first);
      data.push_back({f.follow_up_days, f.event, i < nt, stratum[i]});
    }
    return fit_stratified_cox(data);
  }
};

}  // namespace

TEST_CASE("eligibility thresholds are inclusive") {
  CHECK_FALSE(check_eligibility(99, 30).model_ok);
  const auto mid = check_eligibility(150, 24);
  CHECK(mid.model_ok);
  CHECK_FALSE(mid.inject_ok);
  const auto edge = check_eligibility(100, 25);
  CHECK(edge.model_ok);
  CHECK(edge.inject_ok);
}

TEST_CASE("control definitions keep their truth bookkeeping") {
  const std::vector<double> hrs{1.5, 2.0, 4.0};
  ControlDefinition neg{3, ControlKind::negative, 1.0, std::nullopt};
  CHECK_NOTHROW(neg.validate(hrs));
  neg.true_hr = 1.2;
  CHECK_THROWS_AS(neg.validate(hrs), ConfigError);
  ControlDefinition pos{synthetic_outcome_id(3, 1), ControlKind::positive, 2.0, 3};
  CHECK_NOTHROW(pos.validate(hrs));
  pos.true_hr = 3.0;
  CHECK_THROWS_AS(pos.validate(hrs), ConfigError);
  pos.true_hr = 2.0;
  pos.parent_negative.reset();
  CHECK_THROWS_AS(pos.validate(hrs), ConfigError);
  CHECK(synthetic_outcome_id(3, 1) == kSyntheticOutcomeBase + 302);
}

TEST_CASE("null rate model has the closed form") {
  std::vector<double> events(20, 0.0), days(20, 50.0);
  for (int i = 0; i < 10; ++i) events[i * 2] = 1.0;
  SUBCASE("all-zero covariates") {
    const auto m = dense_matrix(std::vector<std::vector<double>>(20, std::vector<double>(2, 0.0)));
    const auto fit = fit_outcome_rate_model(m, events, days, 0.0);
    CHECK(fit.intercept == doctest::Approx(std::log(0.01)).epsilon(1e-9));
    for (double r : fit.rates(m)) CHECK(r == doctest::Approx(0.01).epsilon(1e-9));
  }
  SUBCASE("heavy shrinkage") {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({double(i % 2), double(i % 3)});
    const auto m = dense_matrix(rows);
    const auto fit = fit_outcome_rate_model(m, events, days, 1e6);
    CHECK(fit.coefficients.empty());
    CHECK(fit.intercept == doctest::Approx(std::log(0.01)).epsilon(1e-9));
    CHECK(fit_outcome_rate_model_at_ratio(m, events, days, 1.0).coefficients.empty());
  }
  SUBCASE("no events is degenerate") {
    const auto m = dense_matrix(std::vector<std::vector<double>>(20, std::vector<double>(1, 1.0)));
    const std::vector<double> none(20, 0.0);
    CHECK_THROWS_AS(fit_outcome_rate_model(m, none, days, 0.1), DegenerateFitError);
  }
}

TEST_CASE("two-feature Poisson instances match a brute-force oracle") {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 4; ++rep) {
    oracle::TwoFeatureGlm o;
    o.poisson = true;
    std::vector<std::vector<double>> rows;
    std::vector<double> events, days;
    for (int i = 0; i < 20; ++i) {
      const double x1 = z(rng), x2 = std::bernoulli_distribution(0.4)(rng);
      const double t = std::uniform_int_distribution<int>(20, 400)(rng);
      rows.push_back({x1, x2});
      o.x.push_back({x1, x2});
      const double y = std::poisson_distribution<int>(t * 0.005 * std::exp(0.6 * x1 - 0.4 * x2))(rng);
      events.push_back(y);
      days.push_back(t);
      o.y.push_back(y);
      o.offset.push_back(std::log(t));
    }
    if (std::accumulate(events.begin(), events.end(), 0.0) == 0) continue;
    o.lambda = 0.002 + 0.01 * rep;
    const auto m = dense_matrix(rows);
    const auto fit = fit_outcome_rate_model(m, events, days, o.lambda);
    std::vector<double> beta(2, 0.0);
    for (const auto& [j, v] : fit.coefficients) beta[j] = v;
    const double ours = o.objective(fit.intercept, beta[0], beta[1]);
    CHECK(std::abs(ours - o.minimum()) <= 1e-6);
  }
}

TEST_CASE("injection draws") {
  std::vector<double> rates(200, 0.0);
  std::vector<RiskWindow> windows(200, RiskWindow{100, 300});
  SUBCASE("zero rates inject nothing") {
    for (const auto& o : draw_injected_offsets(rates, windows, 3.0, 1)) CHECK_FALSE(o.has_value());
  }
  SUBCASE("a zero multiplier injects nothing") {
    std::fill(rates.begin(), rates.end(), 0.01);
    for (const auto& o : draw_injected_offsets(rates, windows, 0.0, 1)) CHECK_FALSE(o.has_value());
  }
  SUBCASE("offsets stay inside the window and follow the seed") {
    std::fill(rates.begin(), rates.end(), 0.01);
    const auto a = draw_injected_offsets(rates, windows, 1.0, 9);
    CHECK(a == draw_injected_offsets(rates, windows, 1.0, 9));
    std::size_t hits = 0;
    for (const auto& o : a) {
      if (!o) continue;
      ++hits;
      CHECK(*o >= 0);
      CHECK(*o < 200);
    }
    // P(k >= 1) = 1 - exp(-2) for every subject.
    const double p = 1 - std::exp(-2.0);
    CHECK(std::abs(hits / 200.0 - p) < 4 * std::sqrt(p * (1 - p) / 200));
  }
  SUBCASE("injection probability tracks the expected count") {
    std::mt19937_64 rng(2);
    std::vector<double> lt;
    for (std::size_t i = 0; i < rates.size(); ++i) {
      rates[i] = std::uniform_real_distribution<double>(0.0001, 0.01)(rng);
      windows[i] = {0, std::uniform_int_distribution<int>(10, 400)(rng)};
      lt.push_back(rates[i] * windows[i].length());
    }
    const auto d = draw_injected_offsets(rates, windows, 1.0, 4);
    std::vector<double> injected;
    for (const auto& o : d) injected.push_back(o ? 1.0 : 0.0);
    CHECK(spearman(injected, lt) > 0.0);
  }
}

TEST_CASE("positive control injection on a simulated pair") {
  const Question q(6000, 3);
  const auto windows = q.target_windows();
  const auto a = inject_positive_control(q.db, q.pair, 1, q.target_rates, windows, 2.0,
                                         synthetic_outcome_id(1, 1), 17);
  SUBCASE("definition and determinism") {
    CHECK(a.definition.kind == ControlKind::positive);
    CHECK(a.definition.parent_negative == ConditionId{1});
    CHECK(a.definition.true_hr == 2.0);
    const auto b = inject_positive_control(q.db, q.pair, 1, q.target_rates, windows, 2.0,
                                           synthetic_outcome_id(1, 1), 17);
    CHECK(a.occurrences(q.pair) == b.occurrences(q.pair));
    CHECK(a.injected_subjects > 0);
  }
  SUBCASE("target counts grow, comparator counts are unchanged") {
    std::size_t parent_target = 0, synthetic_target = 0;
    for (std::size_t i = 0; i < q.pair.target_subjects.size(); ++i) {
      const auto& s = q.pair.target_subjects[i];
      const auto original = first_outcome_from(q.db, s.person_index, 1, s.index_day);
      parent_target += follow_up(windows[i], original).event;
      synthetic_target += follow_up(windows[i], a.target_first_event[i]).event;
      if (original && a.target_first_event[i]) CHECK(*a.target_first_event[i] <= *original);
    }
    CHECK(synthetic_target >= parent_target);
    // Injections that pre-empt an in-window event add no person.
    std::size_t preempted = 0;
    for (std::size_t i = 0; i < a.injected.size(); ++i) {
      const auto& s = q.pair.target_subjects[i];
      const auto original = first_outcome_from(q.db, s.person_index, 1, s.index_day);
      preempted += a.injected[i] && follow_up(windows[i], original).event;
    }
    CHECK(synthetic_target - parent_target == a.injected_subjects - preempted);
    for (std::size_t i = 0; i < q.pair.comparator_subjects.size(); ++i) {
      const auto& s = q.pair.comparator_subjects[i];
      CHECK(a.comparator_first_event[i] == first_outcome_from(q.db, s.person_index, 1, s.index_day));
    }
  }
  SUBCASE("zero rates reproduce the parent") {
    const std::vector<double> zero(q.target_rates.size(), 0.0);
    const auto r = inject_positive_control(q.db, q.pair, 1, zero, windows, 4.0, 5, 1);
    CHECK(r.injected_subjects == 0);
    for (std::size_t i = 0; i < q.pair.target_subjects.size(); ++i) {
      const auto& s = q.pair.target_subjects[i];
      CHECK(r.target_first_event[i] == first_outcome_from(q.db, s.person_index, 1, s.index_day));
    }
  }
  SUBCASE("target HR at or below 1 is a configuration error") {
    CHECK_THROWS_AS(inject_positive_control(q.db, q.pair, 1, q.target_rates, windows, 1.0, 5, 1),
                    ConfigError);
  }
}

TEST_CASE("injected HR 2 is recovered downstream over 20 seeds") {
  const Question q(14000, 8);
  REQUIRE(q.pair.size() >= 10000);
  const auto null_estimate = q.estimate(inject_positive_control(
      q.db, q.pair, 1, std::vector<double>(q.target_rates.size(), 0.0), q.target_windows(), 2.0, 5, 0));
  REQUIRE(null_estimate.estimable);
  double sum_log = 0, sum_se = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = inject_positive_control(q.db, q.pair, 1, q.target_rates, q.target_windows(), 2.0,
                                           5, 100 + seed);
    const auto e = q.estimate(r);
    REQUIRE(e.estimable);
    sum_log += e.log_hr;
    sum_se += e.se_log_hr;
  }
  const double mean_log = sum_log / 20, mean_se = sum_se / 20;
  MESSAGE("null log HR " << null_estimate.log_hr << ", injected mean " << mean_log << " (se " << mean_se << ")");
  CHECK(std::abs(mean_log - std::log(2.0)) <= 3 * mean_se);
}
