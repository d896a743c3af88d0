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

#include "obsgrid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "obsgrid/errors.hpp"

namespace obsgrid {

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }
bool is_positive(double v) { return std::isfinite(v) && v > 0.0; }

constexpr int kFillDays = 30;
constexpr int kMaxGapDays = 60;
constexpr int kMaxEventsPerOutcome = 3;

struct Segment {
  double start;
  double end;  // exclusive
  DrugId drug;  // 0 when unexposed
};

class Generator {
 public:
  explicit Generator(const SimConfig& c) : c_(c), rng_(c.rng_seed) {}

  PatientDatabase run();

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return normal_(rng_); }

  void draw_parameters();
  void generate_person(PersonId id);
  /// Appends exposure rows for one treatment course; returns the last exposed day.
  Day add_course(PersonId id, DrugId drug, Day start, Day obs_end);

  const SimConfig& c_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};

  std::vector<double> prevalence_;
  std::size_t n_features_ = 0;                  // baseline covariates + age + sex
  std::vector<std::vector<double>> treat_w_;    // [treatment][feature]
  std::vector<double> treat_u_;                 // latent loading per treatment
  std::vector<std::vector<double>> outcome_w_;  // [outcome][feature]
  std::vector<double> outcome_u_;               // latent loading per outcome
  std::vector<std::vector<double>> log_hr_;     // [treatment][outcome]
  Day span_days_ = 0;

  std::vector<Person> persons_;
  std::vector<ObservationPeriod> periods_;
  std::vector<DrugExposure> exposures_;
  std::vector<ConditionOccurrence> conditions_;
};

void Generator::draw_parameters() {
  const std::size_t J = c_.n_baseline_covariates;
  prevalence_ = c_.covariate_prevalences;
  if (prevalence_.empty()) {
    prevalence_.resize(J);
    for (auto& p : prevalence_) p = 0.05 + 0.35 * uniform();
  }
  n_features_ = J + 2;
  const double norm = 1.0 / std::sqrt(static_cast<double>(n_features_));
  const std::size_t K = c_.n_treatments;
  treat_w_.assign(K, std::vector<double>(n_features_));
  treat_u_.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (auto& w : treat_w_[k]) w = normal() * norm;
    if (K > 1) treat_u_[k] = 0.5 * (2.0 * static_cast<double>(k) / static_cast<double>(K - 1) - 1.0);
  }
  const std::size_t O = c_.n_outcomes;
  outcome_w_.assign(O, std::vector<double>(n_features_));
  outcome_u_.assign(O, 0.0);
  for (std::size_t o = 0; o < O; ++o) {
    for (auto& w : outcome_w_[o]) w = normal() * norm * c_.outcome_confounding_sd;
    outcome_u_[o] = normal();
  }
  log_hr_.assign(K, std::vector<double>(O, 0.0));
  for (const auto& [key, v] : c_.true_log_hr)
    log_hr_[static_cast<std::size_t>(key.first - 1)][static_cast<std::size_t>(key.second - 1)] = v;
  span_days_ = static_cast<Day>(std::lround(c_.observation_years * 365.0));
}

Day Generator::add_course(PersonId id, DrugId drug, Day start, Day obs_end) {
  std::geometric_distribution<int> course_len(1.0 / c_.mean_treatment_days);
  int remaining = 1 + course_len(rng_);
  Day cursor = start;
  Day last = start;
  while (remaining > 0 && cursor <= obs_end) {
    const int len = std::min(kFillDays, remaining);
    const Day end = std::min<Day>(cursor + len - 1, obs_end);
    exposures_.push_back({id, drug, cursor, end});
    last = end;
    remaining -= len;
    cursor = end + 1;
    if (remaining > 0 && uniform() < c_.gap_probability) cursor += uniform_int(1, kMaxGapDays);
  }
  return last;
}

void Generator::generate_person(PersonId id) {
  const int age0 = uniform_int(18, 80);
  const int sex = uniform() < 0.5 ? 1 : 0;
  const double latent = normal();
  std::vector<int> x(c_.n_baseline_covariates);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = uniform() < prevalence_[j] ? 1 : 0;

  const bool short_washout = uniform() < c_.short_washout_fraction;
  const Day pre_index = short_washout ? uniform_int(30, 364) : uniform_int(365, 365 + 730);
  const Day latest_start = span_days_ - pre_index - 60;
  persons_.push_back({id, kDatabaseStartYear - age0, sex});
  if (latest_start < 0) {
    // Too little calendar time for an index date: observed but never treated.
    periods_.push_back({id, 0, std::max<Day>(span_days_ - 1, 0)});
    return;
  }
  const Day obs_start = uniform_int(0, std::min<Day>(latest_start, span_days_ / 3));
  const Day index = obs_start + pre_index;
  std::exponential_distribution<double> follow(1.0 / c_.mean_follow_up_days);
  const Day obs_end = std::min<Day>(span_days_ - 1, index + 1 + static_cast<Day>(follow(rng_)));
  periods_.push_back({id, obs_start, obs_end});

  // Standardized features shared by the treatment and outcome models.
  std::vector<double> z(n_features_, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double p = prevalence_[j];
    if (p > 0.0 && p < 1.0) z[j] = (x[j] - p) / std::sqrt(p * (1.0 - p));
  }
  const double age_at_index = age0 + index / 365.0;
  z[x.size()] = (age_at_index - 50.0) / 18.0;
  z[x.size() + 1] = (sex - 0.5) / 0.5;

  const std::size_t K = c_.n_treatments;
  std::vector<double> weight(K);
  double max_lin = -1e300;
  for (std::size_t k = 0; k < K; ++k) {
    double lin = 0.0;
    for (std::size_t f = 0; f < n_features_; ++f) lin += treat_w_[k][f] * z[f];
    weight[k] = c_.channeling_strength * lin + treat_u_[k] * latent;
    max_lin = std::max(max_lin, weight[k]);
  }
  double total = 0.0;
  for (auto& w : weight) total += (w = std::exp(w - max_lin));
  double u = uniform() * total;
  std::size_t chosen = K - 1;
  for (std::size_t k = 0; k < K; ++k) {
    if (u < weight[k]) {
      chosen = k;
      break;
    }
    u -= weight[k];
  }

  const std::size_t first_exposure = exposures_.size();
  Day last = add_course(id, static_cast<DrugId>(chosen + 1), index, obs_end);
  if (K > 1 && uniform() < c_.switch_probability) {
    const Day second_start = last + uniform_int(1, 180);
    if (second_start <= obs_end) {
      std::size_t other = static_cast<std::size_t>(uniform_int(0, static_cast<int>(K) - 2));
      if (other >= chosen) ++other;
      add_course(id, static_cast<DrugId>(other + 1), second_start, obs_end);
    }
  }
  std::vector<Segment> segments;
  double cursor = obs_start;
  for (std::size_t e = first_exposure; e < exposures_.size(); ++e) {
    const auto& ex = exposures_[e];
    if (ex.start_day > cursor) segments.push_back({cursor, double(ex.start_day), 0});
    segments.push_back({double(ex.start_day), double(ex.end_day) + 1.0, ex.drug_id});
    cursor = ex.end_day + 1.0;
  }
  if (cursor < obs_end + 1.0) segments.push_back({cursor, obs_end + 1.0, 0});

  // Baseline covariates, recorded strictly before index.
  const Day window_lo = std::max<Day>(obs_start, index - 365);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!x[j]) continue;
    Day day;
    if (obs_start <= index - 366 && uniform() < 0.3)
      day = uniform_int(obs_start, index - 366);
    else
      day = uniform_int(window_lo, index - 1);
    const std::int64_t concept_id = kBaselineConceptBase + static_cast<std::int64_t>(j) + 1;
    if ((j + 1) % 2 == 0)
      conditions_.push_back({id, concept_id, day});
    else
      exposures_.push_back({id, concept_id, day, std::min<Day>(day + 29, index - 1)});
  }

  // Outcomes: Poisson processes with piecewise-constant hazard.
  const double log_h0 = std::log(c_.baseline_hazard_per_day);
  for (std::size_t o = 0; o < c_.n_outcomes; ++o) {
    double lin = log_h0 + c_.unmeasured_confounder_strength * outcome_u_[o] * latent;
    for (std::size_t f = 0; f < n_features_; ++f) lin += outcome_w_[o][f] * z[f];
    std::exponential_distribution<double> unit(1.0);
    double target = unit(rng_);
    double cumulative = 0.0;
    int events = 0;
    for (const auto& seg : segments) {
      double log_rate = lin;
      if (seg.drug != 0) log_rate += log_hr_[static_cast<std::size_t>(seg.drug - 1)][o];
      const double rate = std::exp(log_rate);
      double t = seg.start;
      while (events < kMaxEventsPerOutcome && cumulative + rate * (seg.end - t) >= target) {
        t += (target - cumulative) / rate;
        const Day day = std::min<Day>(static_cast<Day>(std::floor(t)), obs_end);
        conditions_.push_back({id, static_cast<ConditionId>(o + 1), day});
        ++events;
        cumulative = 0.0;
        target = unit(rng_);
      }
      if (events >= kMaxEventsPerOutcome) break;
      cumulative += rate * (seg.end - t);
    }
  }
}

PatientDatabase Generator::run() {
  draw_parameters();
  persons_.reserve(c_.n_persons);
  for (std::size_t i = 0; i < c_.n_persons; ++i) generate_person(static_cast<PersonId>(i + 1));
  GroundTruth truth;
  for (std::size_t k = 0; k < c_.n_treatments; ++k)
    for (std::size_t o = 0; o < c_.n_outcomes; ++o)
      truth[{static_cast<DrugId>(k + 1), static_cast<ConditionId>(o + 1)}] = log_hr_[k][o];
  return PatientDatabase(std::move(persons_), std::move(periods_), std::move(exposures_),
                         std::move(conditions_), std::move(truth));
}

}  // namespace

void SimConfig::validate() const {
  if (n_treatments < 1) throw ConfigError("n_treatments must be at least 1");
  if (!covariate_prevalences.empty() && covariate_prevalences.size() != n_baseline_covariates)
    throw ConfigError("covariate_prevalences must have one entry per baseline covariate");
  for (double p : covariate_prevalences)
    if (!is_probability(p)) throw ConfigError("covariate prevalence outside [0,1]");
  if (!is_probability(gap_probability)) throw ConfigError("gap_probability outside [0,1]");
  if (!is_probability(switch_probability)) throw ConfigError("switch_probability outside [0,1]");
  if (!is_probability(short_washout_fraction))
    throw ConfigError("short_washout_fraction outside [0,1]");
  if (!is_positive(baseline_hazard_per_day)) throw ConfigError("baseline_hazard_per_day must be > 0");
  if (!is_positive(mean_treatment_days) || mean_treatment_days < 1.0)
    throw ConfigError("mean_treatment_days must be >= 1");
  if (!is_positive(observation_years)) throw ConfigError("observation_years must be > 0");
  if (!is_positive(mean_follow_up_days)) throw ConfigError("mean_follow_up_days must be > 0");
  if (!std::isfinite(channeling_strength)) throw ConfigError("channeling_strength must be finite");
  if (!std::isfinite(unmeasured_confounder_strength))
    throw ConfigError("unmeasured_confounder_strength must be finite");
  if (!std::isfinite(outcome_confounding_sd) || outcome_confounding_sd < 0)
    throw ConfigError("outcome_confounding_sd must be >= 0");
  for (const auto& [key, v] : true_log_hr) {
    if (key.first < 1 || key.first > static_cast<DrugId>(n_treatments))
      throw ConfigError("true_log_hr references unknown treatment " + std::to_string(key.first));
    if (key.second < 1 || key.second > static_cast<ConditionId>(n_outcomes))
      throw ConfigError("true_log_hr references unknown outcome " + std::to_string(key.second));
    if (!std::isfinite(v)) throw ConfigError("true_log_hr must be finite");
  }
}

PatientDatabase generate_database(const SimConfig& config) {
  config.validate();
  return Generator(config).run();
}

std::vector<GroundTruthRow> ground_truth_table(const PatientDatabase& db) {
  if (!db.ground_truth()) throw UnsupportedError("database carries no ground truth");
  const auto& truth = *db.ground_truth();
  std::set<DrugId> treatments;
  std::set<ConditionId> outcomes;
  for (const auto& [key, v] : truth) {
    treatments.insert(key.first);
    outcomes.insert(key.second);
  }
  auto lookup = [&](DrugId t, ConditionId o) {
    auto it = truth.find({t, o});
    return it == truth.end() ? 0.0 : it->second;
  };
  std::vector<GroundTruthRow> rows;
  for (ConditionId o : outcomes)
    for (DrugId t : treatments)
      for (DrugId c : treatments)
        if (t != c) rows.push_back({t, c, o, std::exp(lookup(t, o) - lookup(c, o))});
  return rows;
}

}  // namespace obsgrid
