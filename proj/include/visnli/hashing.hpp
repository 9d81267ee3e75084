#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace visnli {

using Bytes = std::vector<std::uint8_t>;

std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

// Hash of a field list where each field is length-prefixed, so ("ab","c")
// and ("a","bc") never collide by concatenation.
std::string sha256_fields(std::initializer_list<std::string_view> fields);

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

Bytes to_bytes(std::string_view text);
std::string to_string(std::span<const std::uint8_t> data);

}  // namespace visnli
