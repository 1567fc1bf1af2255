#pragma once

#include <charconv>
#include <string>

namespace noisycon {

/// Shortest text that parses back to exactly `x`; used in every exported
/// file. Locale-independent.
inline std::string format_real(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace noisycon
