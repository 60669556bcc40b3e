#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace debias::detail {

inline bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

/// Lower-cases ASCII bytes only; UTF-8 multi-byte sequences are untouched.
inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

/// Finds `needle` at or after `from`. When the needle starts/ends with an
/// ASCII alphanumeric, the neighbouring byte must not be one (so "true"
/// does not match inside "untrue").
inline std::size_t find_bounded(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.empty()) return std::string_view::npos;
  const bool guard_front = is_ascii_alnum(needle.front());
  const bool guard_back = is_ascii_alnum(needle.back());
  for (auto pos = hay.find(needle, from); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) {
    const bool front_ok = !guard_front || pos == 0 || !is_ascii_alnum(hay[pos - 1]);
    const auto end = pos + needle.size();
    const bool back_ok = !guard_back || end == hay.size() || !is_ascii_alnum(hay[end]);
    if (front_ok && back_ok) return pos;
  }
  return std::string_view::npos;
}

inline std::string_view trim(std::string_view s) {
  static constexpr std::string_view kWs = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(kWs);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWs);
  return s.substr(b, e - b + 1);
}

}  // namespace debias::detail
