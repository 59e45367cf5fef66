#pragma once

#include <charconv>
#include <string>

namespace lwr {

/// Locale-independent rendering with 9 significant digits.
inline std::string format_number(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 9);
  return std::string(buf, result.ptr);
}

}  // namespace lwr
