#include "hazardpipe/core/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

std::string sha256_hex(std::span<const std::uint8_t> data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("HashFailed", "EVP_Digest");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string salted_identity(std::string_view salt, std::string_view token) {
  std::string material;
  material.reserve(salt.size() + token.size() + 1);
  material.append(salt);
  material.push_back('\x1f');
  material.append(token);
  return sha256_hex(material);
}

}  // namespace hazardpipe
