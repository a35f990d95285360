#include "prognosis/csv.hpp"

#include <charconv>
#include <cmath>

#include "prognosis/error.hpp"

namespace prognosis {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::size_t CsvReader::expect_header(const std::vector<std::vector<std::string>>& accepted) {
  std::vector<std::string> header;
  if (!next(header)) throw FormatError("CSV is empty; expected a header line");
  for (std::size_t i = 0; i < accepted.size(); ++i)
    if (header == accepted[i]) return i;
  std::string expected;
  for (const auto& col : accepted.front()) expected += (expected.empty() ? "" : ",") + col;
  throw FormatError("unexpected CSV header; expected '" + expected + "'");
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields = split_csv_line(line);
    return true;
  }
  return false;
}

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw FormatError(what + ": '" + text + "' is not a finite number");
  }
  return value;
}

std::optional<double> parse_optional_double(const std::string& text, const std::string& what) {
  if (text.empty()) return std::nullopt;
  return parse_double(text, what);
}

long long parse_int(const std::string& text, const std::string& what) {
  long long value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(what + ": '" + text + "' is not an integer");
  }
  return value;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

}  // namespace prognosis
