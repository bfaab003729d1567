#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace zst::csv {

/// Shortest decimal text that parses back to exactly the same double.
std::string format(double value);

/// Strict parse of a full field; throws std::invalid_argument on trailing garbage.
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

/// Splits one line on commas. No quoting support; fields never contain commas.
std::vector<std::string_view> split(std::string_view line);

/// Strips a trailing '\r' left by CRLF files.
std::string_view trim_line(std::string_view line);

/// Joins already formatted fields with commas.
std::string join(const std::vector<std::string>& fields);

}  // namespace zst::csv
