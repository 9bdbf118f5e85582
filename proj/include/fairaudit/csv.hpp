#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fairaudit::csv {

// Splits one CSV line (RFC 4180 quoting, no embedded newlines).
// Throws ValidationError on an unterminated quote.
std::vector<std::string> split_row(std::string_view line);

// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string escape(std::string_view field);

std::string join_row(const std::vector<std::string>& fields);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

// Parses the whole string as a double; nullopt when anything is left over.
std::optional<double> parse_double(std::string_view text);

/// Line-oriented reader. Skips blank lines and lines starting with '#'
/// (used for `# format_version=` preambles), and tracks 1-based file line
/// numbers for error messages.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields);
  std::size_t line_number() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace fairaudit::csv
