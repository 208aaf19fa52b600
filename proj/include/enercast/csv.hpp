// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Minimal comma-delimited reader/writer for calibration tables and traces.
// Fields are unquoted; `#` lines are comments.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "enercast/error.hpp"

namespace enercast {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

struct CsvDocument {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based, parallel to rows
  std::string comments;                   // `#` lines, marker stripped, newline-joined

  // Column index for each name; missing names are reported into `diags`.
  std::vector<std::size_t> require_columns(const std::vector<std::string>& names, Diagnostics& diags) const {
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
      std::size_t found = header.size();
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == n) found = i;
      if (found == header.size()) diags.push_back({"header", "missing column '" + n + "'"});
      idx.push_back(found);
    }
    return idx;
  }
};

// With `has_header`, the first non-comment line names the columns and every
// row must match its width.
inline CsvDocument parse_csv(std::string_view text, const std::string& source, bool has_header = true) {
  CsvDocument doc;
  doc.source = source;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_done = !has_header;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '#') {
      if (!doc.comments.empty()) doc.comments += "\n";
      doc.comments += std::string(trim(line.substr(1)));
      continue;
    }
    auto fields = split_fields(line);
    if (!header_done) {
      doc.header = std::move(fields);
      header_done = true;
      continue;
    }
    if (has_header && fields.size() != doc.header.size())
      throw ValidationError(source + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(doc.header.size()) + " fields, found " + std::to_string(fields.size()));
    doc.rows.push_back(std::move(fields));
    doc.line_numbers.push_back(line_no);
  }
  if (has_header && doc.header.empty()) throw ValidationError(source + ": missing header row");
  return doc;
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || p != e || s.empty()) throw ValidationError(where + ": '" + s + "' is not an integer");
  return v;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s.empty()) throw ValidationError(where + ": empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    throw ValidationError(where + ": '" + s + "' is not a finite number");
  return v;
}

// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf, p);
}

}  // namespace enercast
