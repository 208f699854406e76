#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace argus {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b) noexcept;
bool istarts_with(std::string_view s, std::string_view prefix) noexcept;
std::vector<std::string> split(std::string_view s, char delim);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Lowercase snake_case identifier matching [a-z][a-z0-9_]*; empty if the
/// input has no alphanumeric characters.
std::string snake_case(std::string_view s);

bool is_identifier(std::string_view s) noexcept;

bool is_valid_utf8(std::string_view s) noexcept;
std::string latin1_to_utf8(std::string_view s);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);
/// Accepts YYYY-MM-DD with a plausible month/day.
bool is_iso_date(std::string_view s) noexcept;

std::string read_file(const std::string& path);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace argus
