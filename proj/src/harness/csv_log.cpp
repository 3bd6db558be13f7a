// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/harness.hpp"

namespace vil::harness {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw IoError(fmt::format("csv has no column '{}'", name));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(fmt::format("'{}' is empty", path.string()));
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(t.header.size());
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (;;) {
      double v = 0.0;
      auto [q, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) throw IoError(fmt::format("{}:{}: unparsable number", path.string(), lineno));
      row.push_back(v);
      if (q == end) break;
      if (*q != ',') throw IoError(fmt::format("{}:{}: unexpected character", path.string(), lineno));
      p = q + 1;
    }
    if (row.size() != t.header.size()) {
      throw IoError(fmt::format("{}:{}: {} cells, header has {}", path.string(), lineno, row.size(), t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : f_(std::fopen(path.c_str(), "w"), &std::fclose), columns_(header.size()) {
  if (!f_) throw IoError(fmt::format("cannot write '{}'", path.string()));
  std::string h;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) h += ',';
    h += header[i];
  }
  h += '\n';
  std::fputs(h.c_str(), f_.get());
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != columns_) throw InvalidArgument("csv row width does not match header");
  line_.clear();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) line_ += ',';
    fmt::format_to(std::back_inserter(line_), "{}", values[i]);
  }
  line_ += '\n';
  if (std::fputs(line_.c_str(), f_.get()) < 0) throw IoError("csv write failed");
}

void CsvWriter::flush() { std::fflush(f_.get()); }

}  // namespace vil::harness
