#include "talescale/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>

#include "talescale/errors.hpp"

namespace talescale {

namespace {

std::string to_hex(const unsigned char* data, std::size_t len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(kHex[data[i] >> 4]);
    out.push_back(kHex[data[i] & 0xF]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &md_len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  return to_hex(md.data(), md_len);
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string content_digest(std::string_view bytes) {
  return std::string(kDefaultDigestAlgo) + ":" + sha256_hex(bytes);
}

bool is_well_formed_digest(std::string_view digest) {
  auto colon = digest.find(':');
  if (colon == std::string_view::npos) return false;
  if (digest.substr(0, colon) != kDefaultDigestAlgo) return false;
  auto hex = digest.substr(colon + 1);
  if (hex.size() != 64) return false;
  for (char c : hex) {
    if (!std::isxdigit(static_cast<unsigned char>(c)) ||
        std::isupper(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

bool digest_matches(std::string_view expected, std::string_view bytes) {
  auto colon = expected.find(':');
  if (colon == std::string_view::npos ||
      expected.substr(0, colon) != kDefaultDigestAlgo) {
    throw ValidationError("unsupported digest '" + std::string(expected) + "'");
  }
  return expected == content_digest(bytes);
}

}  // namespace talescale
