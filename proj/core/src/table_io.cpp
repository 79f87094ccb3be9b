#include "lvot/table_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace lvot {

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

double parse_double(std::string_view text) {
  std::string owned(text);
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(owned.c_str(), &end);
  if (end == owned.c_str() || *end != '\0') {
    throw std::runtime_error("not a number: '" + owned + "'");
  }
  return value;
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> header)
    : out_(out), columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    out_ << (i ? "," : "") << header[i];
  }
  out_ << '\n';
}

void CsvWriter::cell(const std::string& text) {
  if (filled_ == columns_) {
    throw std::logic_error("csv row has more cells than header columns");
  }
  out_ << (filled_ ? "," : "") << text;
  ++filled_;
}

CsvWriter& CsvWriter::operator<<(double value) {
  cell(format_double(value));
  return *this;
}
CsvWriter& CsvWriter::operator<<(long long value) {
  cell(std::to_string(value));
  return *this;
}
CsvWriter& CsvWriter::operator<<(std::size_t value) {
  cell(std::to_string(value));
  return *this;
}
CsvWriter& CsvWriter::operator<<(int value) {
  cell(std::to_string(value));
  return *this;
}
CsvWriter& CsvWriter::operator<<(const std::string& value) {
  cell(value);
  return *this;
}
CsvWriter& CsvWriter::operator<<(const char* value) {
  cell(value);
  return *this;
}

void CsvWriter::end_row() {
  if (filled_ != columns_) {
    throw std::logic_error("csv row has fewer cells than header columns");
  }
  out_ << '\n';
  filled_ = 0;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  cells.push_back(current);
  return cells;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::runtime_error("missing column '" + std::string(name) + "'");
}

bool CsvTable::has_column(std::string_view name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

double CsvTable::number(std::size_t row, std::string_view name) const {
  return parse_double(rows.at(row).at(column(name)));
}

const std::string& CsvTable::text(std::size_t row, std::string_view name) const {
  return rows.at(row).at(column(name));
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty table");
  }
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw std::runtime_error("row " + std::to_string(table.rows.size() + 1) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return read_csv(in);
}

}  // namespace lvot
