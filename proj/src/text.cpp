#include "empaste/text.hpp"

#include <charconv>
#include <cmath>

#include "empaste/error.hpp"

namespace empaste::text {

std::string_view trim(std::string_view s) noexcept {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

long long parse_int(std::string_view s, std::string_view where) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorCode::ParseError, std::string(where) + ": not an integer: '" + std::string(s) + "'");
  return v;
}

std::size_t parse_size(std::string_view s, std::string_view where) {
  const long long v = parse_int(s, where);
  if (v < 0) throw Error(ErrorCode::ParseError, std::string(where) + ": negative count");
  return static_cast<std::size_t>(v);
}

double parse_double(std::string_view s, std::string_view where) {
  s = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, std::string(where) + ": not a number: '" + std::string(s) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace empaste::text
