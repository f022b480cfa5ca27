#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfg {

// FNV-1a, used for feature hashing. Must stay fixed: hashed feature layouts
// bake this function into every trained checkpoint.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::span<const std::uint8_t> bytes);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
// Throws IoError if the file cannot be read.
std::string sha256_file_hex(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws SchemaError on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace mfg
