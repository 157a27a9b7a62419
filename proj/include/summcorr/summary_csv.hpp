#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "summcorr/errors.hpp"
#include "summcorr/model.hpp"

namespace summcorr {

struct SummaryRow {
  std::string study_id;
  StudySummary study;
  std::string group;  // empty when the table has no group column
};

// Parsed study-level input table. Columns are fixed:
// study_id,n,mean_x,mean_y,var_x,var_y[,group] (sd_x/sd_y variant accepted
// when the caller squares SDs).
struct SummaryTable {
  std::vector<SummaryRow> rows;
  bool has_group = false;
  std::string group_column;  // header name of the 7th column, when present
};

namespace detail {

// RFC 4180 record reader: quoted fields, doubled quotes, CRLF and embedded
// newlines inside quotes.
inline bool read_csv_record(std::istream& is, std::vector<std::string>& fields,
                            int& line_no) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int c;
  while ((c = is.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          field.push_back('"');
          is.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(static_cast<char>(c));
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (is.peek() == '\n') is.get();
      ++line_no;
      fields.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      ++line_no;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field at end of input");
  if (!any) return false;
  ++line_no;
  fields.push_back(std::move(field));
  return true;
}

inline double parse_double(const std::string& s, const std::string& column,
                           int line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": column '" +
                     column + "' is not a number: '" + s + "'");
  return v;
}

inline long parse_int(const std::string& s, const std::string& column,
                      int line_no) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": column '" +
                     column + "' is not an integer: '" + s + "'");
  return v;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace detail

// Parses and validates a summary table. Errors carry 1-based line numbers.
// With sd_columns the 5th/6th columns are named sd_x/sd_y and are squared.
inline SummaryTable parse_summary_csv(std::istream& is,
                                      bool sd_columns = false) {
  const std::string vx_name = sd_columns ? "sd_x" : "var_x";
  const std::string vy_name = sd_columns ? "sd_y" : "var_y";

  std::vector<std::string> fields;
  int line_no = 0;
  if (!detail::read_csv_record(is, fields, line_no))
    throw ParseError("empty input: expected a header row");
  const std::vector<std::string> expected = {"study_id", "n",     "mean_x",
                                             "mean_y",   vx_name, vy_name};
  if (fields.size() < 6 || fields.size() > 7)
    throw ParseError("header must have 6 columns (plus an optional group "
                     "column), got " + std::to_string(fields.size()));
  for (std::size_t i = 0; i < 6; ++i)
    if (fields[i] != expected[i])
      throw ParseError("header column " + std::to_string(i + 1) +
                       " must be '" + expected[i] + "', got '" + fields[i] +
                       "'");
  SummaryTable table;
  table.has_group = fields.size() == 7;
  if (table.has_group) table.group_column = fields[6];

  std::set<std::pair<std::string, std::string>> seen;
  while (detail::read_csv_record(is, fields, line_no)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (fields.size() != (table.has_group ? 7u : 6u))
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.has_group ? 7 : 6) +
                       " fields, got " + std::to_string(fields.size()));
    SummaryRow row;
    row.study_id = fields[0];
    const long n = detail::parse_int(fields[1], "n", line_no);
    row.study.n = static_cast<int>(n);
    row.study.mean_x = detail::parse_double(fields[2], "mean_x", line_no);
    row.study.mean_y = detail::parse_double(fields[3], "mean_y", line_no);
    double vx = detail::parse_double(fields[4], vx_name, line_no);
    double vy = detail::parse_double(fields[5], vy_name, line_no);
    if (sd_columns) {
      vx *= vx;
      vy *= vy;
    }
    row.study.var_x = vx;
    row.study.var_y = vy;
    if (table.has_group) row.group = fields[6];
    try {
      row.study.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + " (study '" +
                            row.study_id + "'): " + e.what());
    }
    if (!seen.insert({row.group, row.study_id}).second)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": duplicate study_id '" + row.study_id +
                            "' within group '" + row.group + "'");
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Serialization is lossless for all numeric fields at 17 significant digits.
inline void write_summary_csv(std::ostream& os, const SummaryTable& table) {
  os << "study_id,n,mean_x,mean_y,var_x,var_y";
  if (table.has_group)
    os << ',' << (table.group_column.empty() ? "group" : table.group_column);
  os << '\n';
  char buf[40];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (const auto& row : table.rows) {
    os << detail::csv_quote(row.study_id) << ',' << row.study.n << ',';
    put(row.study.mean_x);
    os << ',';
    put(row.study.mean_y);
    os << ',';
    put(row.study.var_x);
    os << ',';
    put(row.study.var_y);
    if (table.has_group) os << ',' << detail::csv_quote(row.group);
    os << '\n';
  }
}

}  // namespace summcorr
