#include "dfl/csv.hpp"

#include <charconv>
#include <istream>
#include <sstream>

#include "dfl/errors.hpp"

namespace dfl {

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<int> lines;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_started = false, record_open = false;
  int line = 1, record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A lone empty field is a blank line; skip it.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
      lines.push_back(record_line);
    }
    record.clear();
    record_open = false;
  };

  char c;
  while (in.get(c)) {
    if (!record_open) {
      record_open = true;
      record_line = line;
    }
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          std::ostringstream os;
          os << "line " << line << ": quote inside an unquoted field";
          throw ParseError(os.str());
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) {
    std::ostringstream os;
    os << "line " << record_line << ": unterminated quoted field";
    throw ParseError(os.str());
  }
  if (record_open) end_record();
  if (records.empty()) throw ParseError("empty CSV input");

  CsvTable table;
  table.header = std::move(records.front());
  for (auto& h : table.header) {
    const auto b = h.find_first_not_of(" \t");
    const auto e = h.find_last_not_of(" \t");
    h = b == std::string::npos ? std::string() : h.substr(b, e - b + 1);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      std::ostringstream os;
      os << "line " << lines[r] << ": expected " << table.header.size() << " fields, found "
         << records[r].size();
      throw ParseError(os.str());
    }
    table.rows.push_back(std::move(records[r]));
    table.row_lines.push_back(lines[r]);
  }
  return table;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

double parse_number(const std::string& text, int line, int column) {
  std::string clean;
  for (char c : text)
    if (c != ',' && c != ' ' && c != '\t') clean += c;
  double value = 0.0;
  const char* first = clean.data();
  const char* last = first + clean.size();
  if (!clean.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (clean.empty() || ec != std::errc() || ptr != last) {
    std::ostringstream os;
    os << "line " << line << ", column " << column << ": cannot parse number '" << text << "'";
    throw ParseError(os.str());
  }
  return value;
}

}  // namespace dfl
