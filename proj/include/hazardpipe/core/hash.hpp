#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace hazardpipe {

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

// Salted identity hash used for submitter anonymisation.
std::string salted_identity(std::string_view salt, std::string_view token);

}  // namespace hazardpipe
