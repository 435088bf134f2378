#pragma once

#include <charconv>
#include <string>
#include <string_view>

namespace spdelab {

// Shortest round-trip decimal representation. All CSV/JSON numbers go
// through here so that output bytes depend only on the values.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Parses a full string as a double; throws std::invalid_argument otherwise.
double parse_double(std::string_view text);

}  // namespace spdelab
