#pragma once

// Shortest round-trip decimal formatting for the CSV/JSON outputs, so that
// repeated runs with the same inputs produce byte-identical files.

#include <charconv>
#include <string>
#include <system_error>

namespace coexist {

inline std::string format_double(double v) {
  if (v == 0.0) return "0";  // collapse negative zero
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

}  // namespace coexist
