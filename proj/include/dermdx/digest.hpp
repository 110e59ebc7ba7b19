#pragma once

#include <string>
#include <string_view>

namespace dermdx::digest {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);

/// Throws ImageError on malformed input.
std::string base64_decode(std::string_view encoded);

} // namespace dermdx::digest
