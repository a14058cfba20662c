#pragma once

#include <charconv>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "corrstop/linalg.hpp"

// RFC-4180 CSV ingestion: comma separated, double-quoted fields with "" as
// the embedded quote, first row is the header. Every data cell must parse as
// a decimal floating point number; missing cells are an error.

namespace corrstop {

struct CsvError : std::runtime_error {
  int line;
  CsvError(int line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what),
        line(line_no) {}
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;  // source line of each row, for diagnostics
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool any_field = false;
  int line = 1;
  int record_line = 1;

  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
    any_field = true;
  };
  auto end_record = [&]() {
    end_field();
    if (table.header.empty()) {
      table.header = record;
    } else {
      if (record.size() != table.header.size())
        throw CsvError(record_line, "expected " + std::to_string(table.header.size()) +
                                        " fields, found " + std::to_string(record.size()));
      table.rows.push_back(record);
      table.row_lines.push_back(record_line);
    }
    record.clear();
    any_field = false;
    record_line = line;
  };

  char ch;
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        break;
      case ',':
        end_field();
        // a record with at least one comma has fields even if all empty
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        if (any_field || !field.empty()) end_record();
        record_line = line;
        break;
      default:
        field.push_back(ch);
    }
  }
  if (in_quotes) throw CsvError(line, "unterminated quoted field");
  if (any_field || !field.empty()) end_record();
  if (table.header.empty()) throw CsvError(1, "empty input");
  return table;
}

inline double parse_cell(const std::string& cell, int line, const std::string& column) {
  if (cell.empty()) throw CsvError(line, "missing value in column '" + column + "'");
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw CsvError(line, "non-numeric value '" + cell + "' in column '" + column + "'");
  return value;
}

// Builds DesignData from a parsed table, taking one named column as the
// response and every other column as a covariate.
inline DesignData design_from_csv(const CsvTable& table, const std::string& response) {
  int y_col = -1;
  for (int j = 0; j < static_cast<int>(table.header.size()); ++j) {
    if (table.header[static_cast<std::size_t>(j)] == response) {
      y_col = j;
      break;
    }
  }
  if (y_col < 0) throw CsvError(1, "response column '" + response + "' not found");
  const int n = static_cast<int>(table.rows.size());
  const int p = static_cast<int>(table.header.size()) - 1;
  if (p < 1) throw CsvError(1, "no covariate columns");

  Matrix x(n, p);
  Vector y(n);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(p));
  for (int j = 0; j < static_cast<int>(table.header.size()); ++j) {
    if (j != y_col) names.push_back(table.header[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const int line = table.row_lines[static_cast<std::size_t>(i)];
    int out_j = 0;
    for (int j = 0; j < static_cast<int>(row.size()); ++j) {
      const double v = parse_cell(row[static_cast<std::size_t>(j)], line,
                                  table.header[static_cast<std::size_t>(j)]);
      if (j == y_col) {
        y(i) = v;
      } else {
        x(i, out_j++) = v;
      }
    }
  }
  return DesignData::build(std::move(x), std::move(y), std::move(names));
}

inline std::string csv_quote(const std::string& s) {
  bool needs = false;
  for (char c : s)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') needs = true;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace corrstop
