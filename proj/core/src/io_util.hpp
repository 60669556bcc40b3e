#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace debias::detail {

/// Reads a whole file. Throws Error(IoFailure).
std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partial file. Creates parent directories. Throws Error(IoFailure).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Non-empty, non-blank lines with their 1-based line numbers.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line, line_no);
    if (nl == text.size()) break;
    pos = nl + 1;
  }
}

}  // namespace debias::detail
