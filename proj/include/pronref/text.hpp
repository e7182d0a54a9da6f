#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pronref {

std::string_view trim(std::string_view s);
std::string ascii_upper(std::string_view s);

/// Lower-cases ASCII letters and the upper-case Latin-1 letters (Ä, Ö, Ü, ...)
/// in UTF-8 text. Other code points pass through unchanged.
std::string fold_case(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

template <typename Range>
std::string join(const Range& parts, std::string_view sep) {
  std::string out;
  bool first = true;
  for (const auto& p : parts) {
    if (!first) out += sep;
    out += p;
    first = false;
  }
  return out;
}

/// printf-style "%.Nf" formatting; locale independent for the C locale.
std::string format_fixed(double value, int decimals);

}  // namespace pronref
