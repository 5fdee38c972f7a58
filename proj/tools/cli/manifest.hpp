#pragma once

#include <filesystem>
#include <string>

namespace tilq::app {

/// Lower-case hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace tilq::app
