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

// Exercises the shared library through its C interface only.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "doctest.h"
#include "obsgrid/obsgrid.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path root;
  Scratch() {
    root = fs::temp_directory_path() / ("obsgrid_capi_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
};

const char* kSim = R"({"n_persons": 4000, "n_treatments": 2, "n_outcomes": 6,
                       "n_baseline_covariates": 8, "baseline_hazard_per_day": 0.0003,
                       "rng_seed": 5,
                       "true_log_hr": [{"treatment": 1, "outcome": 1, "log_hr": 0.7}]})";

std::string run_config(const std::string& db_dir) {
  return R"({"databases": [{"name": "capi", "path": ")" + db_dir + R"("}],
             "treatments": [1, 2], "outcomes": [1], "negative_controls": [2, 3, 4, 5, 6],
             "analyses": [{"name": "ot", "kind": "on_treatment", "gap_days": 30}],
             "min_arm_size": 100, "covariates": {"min_nonzero": 20},
             "ps": {"folds": 4, "lambdas": 6}, "rng_seed": 3})";
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(obsgrid_version()).size() > 0);
  CHECK(std::string(obsgrid_status_name(OBSGRID_OK)) == "ok");
  CHECK(std::string(obsgrid_status_name(OBSGRID_ERR_CONFIG)).size() > 0);
}

TEST_CASE("errors become status codes with a message") {
  obsgrid_database* db = nullptr;
  CHECK(obsgrid_simulate_json("{broken", &db) == OBSGRID_ERR_CONFIG);
  CHECK(db == nullptr);
  CHECK(std::string(obsgrid_last_error()).size() > 0);
  CHECK(obsgrid_simulate_json(kSim, nullptr) == OBSGRID_ERR_INVALID_ARGUMENT);
  CHECK(obsgrid_database_load("/nonexistent/obsgrid", &db) == OBSGRID_ERR_IO);
  obsgrid_store* store = nullptr;
  CHECK(obsgrid_store_load("/nonexistent/obsgrid", &store) == OBSGRID_ERR_IO);
  double lb = 0, ub = 0;
  CHECK(obsgrid_calibrate_ci(0.1, -1.0, 0, 0, -30, 0, 0.05, &lb, &ub) == OBSGRID_ERR_CONFIG);
}

TEST_CASE("numerical helpers") {
  const double y[] = {0.0, 0.693}, se[] = {0.1, 0.1};
  double q = 0, i2 = 0;
  REQUIRE(obsgrid_compute_i2(y, se, 2, &q, &i2) == OBSGRID_OK);
  CHECK(q == doctest::Approx(24.01245).epsilon(1e-6));
  CHECK(i2 == doctest::Approx(0.958).epsilon(1e-3));
  double lb = 0, ub = 0;
  REQUIRE(obsgrid_calibrate_ci(0.0, 1.0, 0, 0, -30, 0, 0.05, &lb, &ub) == OBSGRID_OK);
  CHECK(lb == doctest::Approx(0.1409).epsilon(1e-3));
  CHECK(ub == doctest::Approx(7.0993).epsilon(1e-4));
}

TEST_CASE("simulate, run, read back and report") {
  Scratch scratch;
  obsgrid_database* db = nullptr;
  REQUIRE(obsgrid_simulate_json(kSim, &db) == OBSGRID_OK);
  size_t persons = 0, periods = 0, drugs = 0, conditions = 0;
  REQUIRE(obsgrid_database_counts(db, &persons, &periods, &drugs, &conditions) == OBSGRID_OK);
  CHECK(persons == 4000);
  const auto db_dir = scratch.root / "db";
  REQUIRE(obsgrid_database_write(db, db_dir.c_str()) == OBSGRID_OK);
  obsgrid_database_free(db);

  obsgrid_database* back = nullptr;
  REQUIRE(obsgrid_database_load(db_dir.c_str(), &back) == OBSGRID_OK);
  size_t p2 = 0, o2 = 0, d2 = 0, c2 = 0;
  REQUIRE(obsgrid_database_counts(back, &p2, &o2, &d2, &c2) == OBSGRID_OK);
  CHECK(p2 == persons);
  CHECK(d2 == drugs);
  CHECK(c2 == conditions);
  obsgrid_database_free(back);

  const auto out = scratch.root / "store";
  const obsgrid_run_options opts{1, 5};
  REQUIRE(obsgrid_run_json(run_config(db_dir.string()).c_str(), nullptr, out.c_str(), &opts) == OBSGRID_OK);

  obsgrid_store* store = nullptr;
  REQUIRE(obsgrid_store_load(out.c_str(), &store) == OBSGRID_OK);
  const size_t n = obsgrid_store_size(store);
  CHECK(n >= 2 * 6);
  size_t estimable = 0;
  for (size_t i = 0; i < n; ++i) {
    obsgrid_record r;
    REQUIRE(obsgrid_store_get(store, i, &r) == OBSGRID_OK);
    CHECK(std::string(r.database) == "capi");
    if (r.estimable) {
      ++estimable;
      CHECK(r.suppressed_reason == nullptr);
      CHECK(r.ci_lb < r.hr);
      CHECK(r.hr < r.ci_ub);
    }
    if (!r.is_control) CHECK(std::isnan(r.true_hr));
  }
  CHECK(estimable > 0);
  obsgrid_record past_end;
  CHECK(obsgrid_store_get(store, n, &past_end) == OBSGRID_ERR_INVALID_ARGUMENT);
  size_t qualifying = 0, holding = 0;
  CHECK(obsgrid_transitivity(store, "capi", "ot", 0.05, &qualifying, &holding) == OBSGRID_OK);
  CHECK(qualifying == 0);  // two treatments form no triplet
  obsgrid_store_free(store);

  char* summary = nullptr;
  REQUIRE(obsgrid_report(out.c_str(), nullptr, &summary) == OBSGRID_OK);
  REQUIRE(summary != nullptr);
  CHECK(std::string(summary).find("\"records\"") != std::string::npos);
  obsgrid_string_free(summary);
  CHECK(fs::exists(out / "estimate_scatter.csv"));

  char* loo = nullptr;
  REQUIRE(obsgrid_loo_cv(out.c_str(), (scratch.root / "loo").c_str(), &loo) == OBSGRID_OK);
  REQUIRE(loo != nullptr);
  obsgrid_string_free(loo);
  CHECK(fs::exists(scratch.root / "loo" / "coverage_curve.csv"));
}
