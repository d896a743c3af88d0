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

#include "obsgrid/csv.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "obsgrid/errors.hpp"
#include "obsgrid/numeric.hpp"

namespace obsgrid {

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     std::initializer_list<std::string_view> header) {
  open(path);
  for (auto h : header) field(h);
  columns_ = header.size();
  end_row();
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) {
  open(path);
  for (const auto& h : header) field(h);
  columns_ = header.size();
  end_row();
}

void CsvWriter::open(const std::filesystem::path& path) {
  path_ = path;
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + path.string());
}

CsvWriter& CsvWriter::field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") != std::string_view::npos)
    throw IoError("field contains a delimiter: " + std::string(text));
  if (in_row_++ > 0) out_.put(',');
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  return *this;
}

CsvWriter& CsvWriter::field(std::int64_t value) { return field(std::to_string(value)); }

CsvWriter& CsvWriter::field(double value) {
  if (std::isnan(value)) return field(std::string_view{});
  return field(format_double(value));
}

void CsvWriter::end_row() {
  if (columns_ != 0 && in_row_ != columns_)
    throw IoError("row width mismatch writing " + path_.string());
  out_.put('\n');
  in_row_ = 0;
  if (!out_) throw IoError("write failed: " + path_.string());
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw IoError("missing column: " + std::string(name));
}

namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != table.header.size())
      throw IoError("ragged row in " + path.string() + ": " + line);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::int64_t parse_int(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw IoError("not an integer: '" + std::string(text) + "'");
  return v;
}

double parse_double(std::string_view text) {
  if (text.empty() || text == "NA") return std::numeric_limits<double>::quiet_NaN();
  if (text == "Inf") return std::numeric_limits<double>::infinity();
  if (text == "-Inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw IoError("not a number: '" + std::string(text) + "'");
  return v;
}

}  // namespace obsgrid
