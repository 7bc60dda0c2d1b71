#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/io/config.hpp"

namespace rcm::io {

// Shortest form is not used: 17 significant digits round-trip every double and
// give the same text on every platform with a conforming to_chars.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline std::string quote_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string cell(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "1" : "0";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(static_cast<double>(v));
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else {
    return quote_field(std::string_view(v));
  }
}

// Buffered table written in one go by close(): header, rows, then a
// "#key=value" metadata block.
class CsvWriter {
 public:
  CsvWriter(std::string path, std::vector<std::string> header)
      : path_(std::move(path)), columns_(header.size()) {
    line(header);
  }

  template <class... Ts>
  void row(const Ts&... vs) {
    if (sizeof...(Ts) != columns_) throw StructuralError("csv: row width does not match header");
    std::vector<std::string> cells{cell(vs)...};
    line(cells);
  }

  void meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }

  void close() {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path_ + "'");
    out << body_;
    for (const auto& [k, v] : meta_) out << '#' << k << '=' << v << '\n';
    if (!out) throw Error("write failed for '" + path_ + "'");
  }

  const std::string& path() const noexcept { return path_; }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) body_ += ',';
      body_ += cells[i];
    }
    body_ += '\n';
  }

  std::string path_;
  std::size_t columns_;
  std::string body_;
  std::vector<std::pair<std::string, std::string>> meta_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::string> meta;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("csv: missing column '" + name + "'");
  }
  std::vector<double> numbers(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(parse_double(name, r.at(c)));
    return out;
  }
};

inline std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input '" + path + "'");
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) t.meta[line.substr(1, eq - 1)] = line.substr(eq + 1);
      continue;
    }
    auto cells = parse_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != t.header.size())
        throw ConfigError("csv '" + path + "': row width does not match header");
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw ConfigError("csv '" + path + "' has no header");
  return t;
}

}  // namespace rcm::io
