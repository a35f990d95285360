#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace prognosis {

/// Minimal comma-separated reader: no embedded commas or quotes, CRLF tolerated,
/// blank lines skipped.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  /// Reads the header and fails unless it equals one of the accepted column lists.
  /// Returns the index of the list that matched.
  std::size_t expect_header(const std::vector<std::vector<std::string>>& accepted);
  void expect_header(const std::vector<std::string>& columns) {
    expect_header(std::vector<std::vector<std::string>>{columns});
  }

  bool next(std::vector<std::string>& fields);
  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line);

double parse_double(const std::string& text, const std::string& what);
std::optional<double> parse_optional_double(const std::string& text, const std::string& what);
long long parse_int(const std::string& text, const std::string& what);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double value);

}  // namespace prognosis
