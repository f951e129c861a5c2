#pragma once

// Minimal RFC 4180 reader/writer: comma delimiter, double-quote quoting,
// doubled quotes inside quoted fields, CRLF or LF record separators.

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rateaudit::csv {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("CSV line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line where the record starts
};

struct Table {
  std::vector<std::string> header;
  std::vector<Record> rows;

  /// Column position of `name` in the header, or npos.
  std::size_t column(std::string_view name) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

std::vector<Record> parse_records(std::string_view text);

/// First record is the header. Blank trailing lines are ignored.
Table parse_table(std::string_view text);

Table read_table(const std::string& path);

std::string quote_field(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace rateaudit::csv
