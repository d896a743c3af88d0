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

// Shared helpers for the unit tests: temporary directories and a small
// builder for hand-made databases.
#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "obsgrid/database.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("obsgrid_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
}

/// Concatenated bytes of every regular file under dir, in path order.
inline std::string directory_bytes(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) {
    out += std::filesystem::relative(f, dir).string();
    out += '\n';
    out += read_file(f);
  }
  return out;
}

struct DbBuilder {
  std::vector<obsgrid::Person> persons;
  std::vector<obsgrid::ObservationPeriod> periods;
  std::vector<obsgrid::DrugExposure> drugs;
  std::vector<obsgrid::ConditionOccurrence> conditions;

  DbBuilder& person(obsgrid::PersonId id, obsgrid::Day obs_start, obsgrid::Day obs_end,
                    int birth_year = 1960, int sex = 0) {
    persons.push_back({id, birth_year, sex});
    periods.push_back({id, obs_start, obs_end});
    return *this;
  }
  DbBuilder& drug(obsgrid::PersonId id, obsgrid::DrugId drug, obsgrid::Day start, obsgrid::Day end) {
    drugs.push_back({id, drug, start, end});
    return *this;
  }
  DbBuilder& condition(obsgrid::PersonId id, obsgrid::ConditionId c, obsgrid::Day day) {
    conditions.push_back({id, c, day});
    return *this;
  }
  obsgrid::PatientDatabase build() const {
    return obsgrid::PatientDatabase(persons, periods, drugs, conditions);
  }
};

}  // namespace testing
