#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace cohertrace {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of `bytes`.
Digest sha256(std::string_view bytes);

std::string to_hex(const Digest& digest, std::size_t max_chars = 64);

}  // namespace cohertrace
