#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

namespace slim {

// IEEE 802.3 CRC-32 (zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

// CRC-32 of a whole file's contents; used as a cheap fingerprint when
// comparing outputs of repeated runs.
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace slim
