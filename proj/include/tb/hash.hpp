#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace tb {

/// 64-bit FNV-1a. Not cryptographic; used for content fingerprints.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace tb
