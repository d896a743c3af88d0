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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace obsgrid {

/// Comma-delimited writer. Fields never contain commas or quotes; the
/// writer rejects any that do rather than quoting.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header);
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& field(std::string_view text);
  CsvWriter& field(std::int64_t value);
  CsvWriter& field(int value) { return field(static_cast<std::int64_t>(value)); }
  CsvWriter& field(std::size_t value) { return field(static_cast<std::int64_t>(value)); }
  CsvWriter& field(double value);
  CsvWriter& field(bool value) { return field(static_cast<std::int64_t>(value ? 1 : 0)); }
  void end_row();

  std::size_t columns() const { return columns_; }

 private:
  void open(const std::filesystem::path& path);

  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws IoError if absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a delimited file with a header row. Throws IoError on failure or
/// ragged rows.
CsvTable read_csv(const std::filesystem::path& path);

std::int64_t parse_int(std::string_view text);
double parse_double(std::string_view text);

}  // namespace obsgrid
