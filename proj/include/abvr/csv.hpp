#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "abvr/errors.hpp"

namespace abvr::csv {

// Minimal RFC 4180 record reader: `,` delimiter, optional double quotes,
// `""` escapes inside quoted fields, LF or CRLF line endings. Quoted fields
// may not span lines.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Returns false at end of input. Blank lines are skipped.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line_no_ == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
      if (line.empty()) continue;
      split(line, fields);
      return true;
    }
    return false;
  }

  std::size_t line() const noexcept { return line_no_; }

 private:
  void split(const std::string& line, std::vector<std::string>& fields) const {
    fields.clear();
    std::string cur;
    bool quoted = false;
    bool field_was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur.push_back('"');
            ++i;
          } else {
            quoted = false;
          }
        } else {
          cur.push_back(c);
        }
      } else if (c == '"') {
        if (!cur.empty() || field_was_quoted)
          throw parse_error("stray quote inside unquoted field", line_no_);
        quoted = true;
        field_was_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
        field_was_quoted = false;
      } else {
        if (field_was_quoted)
          throw parse_error("characters after closing quote", line_no_);
        cur.push_back(c);
      }
    }
    if (quoted) throw parse_error("unterminated quoted field", line_no_);
    fields.push_back(std::move(cur));
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Empty (after trimming) means missing. Anything else must be a finite real.
inline std::optional<double> parse_real(std::string_view field, std::size_t line,
                                        std::string_view column) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v))
    throw parse_error("column '" + std::string(column) + "': '" +
                          std::string(field) + "' is not a finite number",
                      line);
  return v;
}

// Shortest representation that reads back to the identical double.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void write_field(std::ostream& os, std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) {
    os << s;
    return;
  }
  os << '"';
  for (char c : s) {
    if (c == '"') os << '"';
    os << c;
  }
  os << '"';
}

}  // namespace abvr::csv
