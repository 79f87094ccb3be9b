#pragma once

// Comma-delimited text tables with a header row. Floating point values are
// written with 17 significant digits so that a write/read cycle is exact.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lvot {

std::string format_double(double value);
double parse_double(std::string_view text);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> header);

  CsvWriter& operator<<(double value);
  CsvWriter& operator<<(long long value);
  CsvWriter& operator<<(std::size_t value);
  CsvWriter& operator<<(int value);
  CsvWriter& operator<<(const std::string& value);
  CsvWriter& operator<<(const char* value);
  void end_row();

 private:
  void cell(const std::string& text);

  std::ostream& out_;
  std::size_t columns_;
  std::size_t filled_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws std::runtime_error when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
  const std::string& text(std::size_t row, std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

}  // namespace lvot
