#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

namespace urbanvae {

/// Lower-case hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-256 of a file's contents. Throws IoError when unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

}  // namespace urbanvae
