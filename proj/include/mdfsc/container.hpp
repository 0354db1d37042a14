#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace mdfsc {

// Framed binary artifact: ASCII magic, u64-LE length-prefixed UTF-8 JSON
// manifest, raw payload, SHA-256 digest of everything preceding.
struct Container {
  nlohmann::json manifest;
  std::vector<std::uint8_t> payload;
};

std::string sha256_hex(const std::uint8_t* data, std::size_t len);
std::string sha256_hex(const std::vector<std::uint8_t>& data);

void write_container(const std::string& path, const std::string& magic,
                     const nlohmann::json& manifest,
                     const std::vector<std::uint8_t>& payload);

// Verifies magic and digest; throws DataError on any mismatch or truncation.
Container read_container(const std::string& path, const std::string& magic);

// Digest of a whole file on disk (for artifact identity / determinism checks).
std::string file_sha256(const std::string& path);

}  // namespace mdfsc
