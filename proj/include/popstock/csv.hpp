#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "popstock/error.hpp"

namespace popstock::csv {

/// Splits one record. Double-quoted fields may contain commas and `""`
/// escapes; a trailing '\r' is dropped.
inline std::vector<std::string> split(std::string_view line, char delim = ',') {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest round-trip representation; identical bits give identical text.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Reads the header line and checks it matches `expected` exactly.
inline void expect_header(std::istream& in, std::string_view expected) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::BadHeader, "empty input, expected header '" + std::string(expected) + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected)
    throw Error(ErrorCode::BadHeader,
                "header '" + line + "' does not match '" + std::string(expected) + "'");
}

/// Reads all data rows after a verified header. Blank lines are skipped;
/// every row must have exactly `columns` fields.
inline std::vector<std::vector<std::string>> read_table(std::istream& in, std::string_view header) {
  expect_header(in, header);
  const auto columns = split(header).size();
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (fields.size() != columns)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(columns) + " fields, got " +
                                             std::to_string(fields.size()));
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace popstock::csv
