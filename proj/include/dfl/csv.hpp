#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfl {

/// RFC 4180 table: quoted fields may hold commas, doubled quotes and line
/// breaks. The first record is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;  // 1-based source line where each row starts

  /// Column index by name, or -1.
  int column(const std::string& name) const;
};

/// Throws ParseError naming the line on unterminated quotes or ragged rows.
CsvTable read_csv(std::istream& in);

std::string csv_field(const std::string& value);

/// Parses a decimal number, tolerating surrounding blanks and thousands
/// separators ("1,234.5"). Throws ParseError with the given location.
double parse_number(const std::string& text, int line, int column);

}  // namespace dfl
