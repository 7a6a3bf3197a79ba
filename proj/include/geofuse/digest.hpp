#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace geofuse {

/// FNV-1a 64-bit digest, used to fingerprint serialized models and reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  return fnv1a64(bytes.data(), bytes.size());
}

inline std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace geofuse
