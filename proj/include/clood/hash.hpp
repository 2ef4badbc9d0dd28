#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace clood {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// Git blob object id: sha1("blob <size>\0" + content).
std::string git_blob_hash(std::span<const std::uint8_t> bytes);

std::string sha256_file(const std::filesystem::path& path);
std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace clood
