#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace persuade {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// 64-bit FNV-1a; stable across platforms, used to derive per-episode seeds.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace persuade
