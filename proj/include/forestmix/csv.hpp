#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "forestmix/errors.hpp"

namespace forestmix {

// Minimal RFC-4180-ish CSV support: comma separator, double quotes for
// fields containing commas, quotes, or newlines. UTF-8 passes through.
namespace csv {

inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline std::vector<std::vector<std::string>> parse(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_data = false;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    row_has_data = false;
  };
  while (i < n) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_data = true;
        ++i;
        break;
      case ',':
        end_field();
        row_has_data = true;
        ++i;
        break;
      case '\r':
        ++i;
        break;
      case '\n':
        if (row_has_data || !field.empty() || !row.empty()) end_row();
        ++i;
        break;
      default:
        field += c;
        row_has_data = true;
        ++i;
        break;
    }
  }
  if (row_has_data || !field.empty() || !row.empty()) end_row();
  require(!quoted, Errc::parse_error, "unterminated quoted csv field");
  return rows;
}

inline std::vector<std::vector<std::string>> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open csv file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

}  // namespace csv
}  // namespace forestmix
