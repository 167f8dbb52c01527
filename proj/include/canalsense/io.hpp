#pragma once

#include <charconv>
#include <string>

namespace canalsense {

/// Fixed numeric format for every emitted file: the shortest text that reads
/// back to the same double, independent of the locale.
inline std::string fmt_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return {buf, res.ptr};
}

}  // namespace canalsense
