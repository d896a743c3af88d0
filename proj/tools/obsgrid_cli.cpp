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

// Command-line front end; talks to the library only through the C API.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "obsgrid/obsgrid.h"

namespace {

int report_failure(const char* what, obsgrid_status status) {
  std::fprintf(stderr, "obsgrid %s: %s: %s\n", what, obsgrid_status_name(status), obsgrid_last_error());
  return static_cast<int>(status) + 1;
}

int print_summary(const char* what, obsgrid_status status, char* summary) {
  if (status != OBSGRID_OK) return report_failure(what, status);
  if (summary) std::printf("%s\n", summary);
  obsgrid_string_free(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"High-throughput calibrated comparative effect estimation"};
  app.set_version_flag("--version", std::string(obsgrid_version()));
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  auto* simulate = app.add_subcommand("simulate", "Generate a simulated patient database");
  simulate->add_option("--config", sim_config, "Simulation config (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim_out, "Output directory for the tables")->required();

  std::string run_config, run_out;
  int workers = 0, ps_strata = 10;
  auto* run = app.add_subcommand("run", "Run the estimation grid");
  run->add_option("--config", run_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Result store directory")->required();
  run->add_option("--workers", workers, "Worker threads (default: config value)")->check(CLI::PositiveNumber);
  auto* strata_opt = run->add_option("--ps-strata", ps_strata, "Propensity score strata")
                         ->check(CLI::PositiveNumber)
                         ->capture_default_str();

  std::string report_store, report_out;
  auto* report = app.add_subcommand("report", "Write report files for a result store");
  report->add_option("--store", report_store, "Result store directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "Report directory (default: the store)");

  std::string loo_store, loo_out;
  auto* loo = app.add_subcommand("loo-cv", "Leave-one-out coverage of the calibration");
  loo->add_option("--store", loo_store, "Result store directory")->required()->check(CLI::ExistingDirectory);
  loo->add_option("--out", loo_out, "Output directory (default: the store)");

  CLI11_PARSE(app, argc, argv);

  if (*simulate) {
    obsgrid_database* db = nullptr;
    auto status = obsgrid_simulate_file(sim_config.c_str(), &db);
    if (status != OBSGRID_OK) return report_failure("simulate", status);
    status = obsgrid_database_write(db, sim_out.c_str());
    size_t persons = 0, periods = 0, exposures = 0, conditions = 0;
    obsgrid_database_counts(db, &persons, &periods, &exposures, &conditions);
    obsgrid_database_free(db);
    if (status != OBSGRID_OK) return report_failure("simulate", status);
    std::printf("persons %zu, observation periods %zu, drug exposures %zu, condition occurrences %zu\n",
                persons, periods, exposures, conditions);
    return 0;
  }
  if (*run) {
    // The strata flag only overrides the config when given explicitly.
    obsgrid_run_options options{workers, strata_opt->count() ? ps_strata : 0};
    const auto status = obsgrid_run_file(run_config.c_str(), run_out.c_str(), &options);
    if (status != OBSGRID_OK) return report_failure("run", status);
    obsgrid_store* store = nullptr;
    if (obsgrid_store_load(run_out.c_str(), &store) == OBSGRID_OK) {
      std::printf("wrote %zu records to %s\n", obsgrid_store_size(store), run_out.c_str());
      obsgrid_store_free(store);
    }
    return 0;
  }
  if (*report) {
    char* summary = nullptr;
    const auto status =
        obsgrid_report(report_store.c_str(), report_out.empty() ? nullptr : report_out.c_str(), &summary);
    return print_summary("report", status, summary);
  }
  char* summary = nullptr;
  const auto status = obsgrid_loo_cv(loo_store.c_str(), loo_out.empty() ? nullptr : loo_out.c_str(), &summary);
  return print_summary("loo-cv", status, summary);
}
