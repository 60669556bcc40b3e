#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace debias {

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Lower-case hex SHA-256 of a file's contents. Throws Error(IoFailure).
std::string sha256_file(const std::filesystem::path& path);

}  // namespace debias
