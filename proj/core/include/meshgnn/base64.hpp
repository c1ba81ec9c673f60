#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace meshgnn::base64 {

std::string encode(std::span<const std::uint8_t> bytes);
// Throws ConfigError on malformed input.
std::vector<std::uint8_t> decode(std::string_view text);

// IEEE-754 binary64 values as little-endian bytes.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

}  // namespace meshgnn::base64
