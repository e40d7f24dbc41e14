#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace recdiff {

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);
/// First eight bytes of the SHA-256 digest, big-endian.
std::uint64_t sha256_u64(std::string_view bytes);

std::string trim(std::string_view s);

}  // namespace recdiff
