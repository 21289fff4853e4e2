#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Small helpers for the line-oriented interchange files.
namespace empaste::text {

std::string_view trim(std::string_view s) noexcept;
std::vector<std::string_view> split(std::string_view s, char sep);

// Throw ParseError mentioning `where` on malformed input.
long long parse_int(std::string_view s, std::string_view where);
std::size_t parse_size(std::string_view s, std::string_view where);
double parse_double(std::string_view s, std::string_view where);

// Shortest representation that round-trips exactly.
std::string format_double(double v);

std::string to_lower(std::string_view s);

}  // namespace empaste::text
