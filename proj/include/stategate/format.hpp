#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace stategate {

/// Fixed significant-digit formatting without exponents.
inline std::string format_real(double x, int significant = 9) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0." + std::string(static_cast<std::size_t>(significant - 1), '0');
  const int magnitude = static_cast<int>(std::floor(std::log10(std::fabs(x))));
  int decimals = std::clamp(significant - 1 - magnitude, 0, 40);
  char buf[96];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, decimals);
  return std::string(buf, res.ptr);
}

}  // namespace stategate
