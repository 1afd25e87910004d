#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kpisentinel/util.hpp"

namespace kpisentinel {

/// Shortest round-trip decimal rendering, so write/parse of doubles is exact.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& field, const std::string& file, std::size_t line,
                           std::size_t column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ParseError(file + ": line " + std::to_string(line) + ", column " +
                     std::to_string(column) + ": expected a number, got '" + field + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& field, const std::string& file, std::size_t line,
                              std::size_t column) {
  std::int64_t v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ParseError(file + ": line " + std::to_string(line) + ", column " +
                     std::to_string(column) + ": expected an integer, got '" + field + "'");
  return v;
}

/// Minimal comma-separated reader. Header row is mandatory and verified
/// against the documented schema; fields are plain UTF-8 without quoting.
class CsvReader {
 public:
  CsvReader(const std::string& path, const std::vector<std::string>& expected_header)
      : path_(path), in_(path) {
    if (!in_) throw ParseError("cannot open " + path);
    std::string header;
    if (!std::getline(in_, header)) throw ParseError(path + ": empty file, header row required");
    strip_cr(header);
    const auto fields = split(header);
    if (fields != expected_header) {
      std::string want;
      for (std::size_t i = 0; i < expected_header.size(); ++i) {
        if (i) want += ',';
        want += expected_header[i];
      }
      throw ParseError(path + ": header mismatch, expected '" + want + "', got '" + header + "'");
    }
    columns_ = expected_header.size();
    line_ = 1;
  }

  /// Reads the next data row. Returns false at end of file.
  bool next(std::vector<std::string>& out) {
    std::string row;
    while (std::getline(in_, row)) {
      ++line_;
      strip_cr(row);
      if (row.empty()) continue;
      out = split(row);
      if (out.size() != columns_)
        throw ParseError(path_ + ": line " + std::to_string(line_) + ": expected " +
                         std::to_string(columns_) + " fields, got " + std::to_string(out.size()));
      return true;
    }
    return false;
  }

  std::size_t line() const { return line_; }
  const std::string& path() const { return path_; }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  static std::vector<std::string> split(const std::string& row) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : row) {
      if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(std::move(cur));
    return fields;
  }

  std::string path_;
  std::ifstream in_;
  std::size_t columns_ = 0;
  std::size_t line_ = 0;
};

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ValueError("cannot open " + path + " for writing");
    write_row(header);
  }

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  void flush() { out_.flush(); }
  bool good() const { return out_.good(); }

 private:
  std::ofstream out_;
};

}  // namespace kpisentinel
