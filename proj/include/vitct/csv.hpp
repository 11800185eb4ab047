#pragma once

// Minimal RFC 4180 reading/writing plus canonical number formatting.

#include <string>
#include <string_view>
#include <vector>

namespace vitct::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source text
  std::vector<std::string> fields;
};

// Parses CSV text; blank lines are skipped. Throws FormatError on an
// unterminated quoted field.
std::vector<Row> parse(std::string_view text);

// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);
std::string join(const std::vector<std::string>& fields);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
// Whole-string parse; throws FormatError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);
std::size_t parse_count(std::string_view text, std::string_view what);

}  // namespace vitct::csv
