#pragma once

#include <array>
#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

#include "nvsense/errors.hpp"

namespace nvsense::detail {

// Shortest round-trip decimal text for a double (locale-free).
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double_token(std::string_view text, int line, int col) {
  double out = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ParseError("expected a number, got '" + std::string(text) + "'", line, col);
  }
  return out;
}

}  // namespace nvsense::detail
