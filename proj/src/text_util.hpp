#pragma once

#include "tricue/errors.hpp"

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>

namespace tricue::detail {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("format_double failed");
  return {buf, ptr};
}

template <class T>
T parse_number(const std::string& text, const std::string& what) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw FormatError("cannot parse " + what + " from '" + text + "'");
  return v;
}

}  // namespace tricue::detail
