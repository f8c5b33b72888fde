#pragma once

#include <span>
#include <string>
#include <string_view>

namespace talescale {

// Content digests are recorded as "algo:hex". Only sha256 is built in.
inline constexpr std::string_view kDefaultDigestAlgo = "sha256";

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);

// Returns "sha256:<hex>" for the given content.
std::string content_digest(std::string_view bytes);

// True when `digest` has the "algo:hex" shape with a supported algorithm.
bool is_well_formed_digest(std::string_view digest);

// Recomputes the digest of `bytes` with the algorithm named in `expected`
// and compares. Throws ValidationError on an unsupported algorithm.
bool digest_matches(std::string_view expected, std::string_view bytes);

}  // namespace talescale
