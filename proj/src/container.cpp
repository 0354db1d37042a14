#include "mdfsc/container.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "mdfsc/errors.hpp"

namespace mdfsc {

namespace {

std::vector<std::uint8_t> sha256_raw(const std::uint8_t* data,
                                     std::size_t len) {
  std::vector<std::uint8_t> out(32);
  unsigned int n = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data, len);
  EVP_DigestFinal_ex(ctx, out.data(), &n);
  EVP_MD_CTX_free(ctx);
  return out;
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

void put_u64le(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xff);
}

std::uint64_t get_u64le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::string sha256_hex(const std::uint8_t* data, std::size_t len) {
  return to_hex(sha256_raw(data, len));
}

std::string sha256_hex(const std::vector<std::uint8_t>& data) {
  return sha256_hex(data.data(), data.size());
}

void write_container(const std::string& path, const std::string& magic,
                     const nlohmann::json& manifest,
                     const std::vector<std::uint8_t>& payload) {
  const std::string mjson = manifest.dump();
  std::vector<std::uint8_t> buf;
  buf.reserve(magic.size() + 8 + mjson.size() + payload.size() + 32);
  buf.insert(buf.end(), magic.begin(), magic.end());
  put_u64le(buf, mjson.size());
  buf.insert(buf.end(), mjson.begin(), mjson.end());
  buf.insert(buf.end(), payload.begin(), payload.end());
  const auto digest = sha256_raw(buf.data(), buf.size());
  buf.insert(buf.end(), digest.begin(), digest.end());

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("write failed: " + path);
}

Container read_container(const std::string& path, const std::string& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
  const std::size_t min_size = magic.size() + 8 + 32;
  if (buf.size() < min_size) throw DataError("truncated file: " + path);
  if (std::memcmp(buf.data(), magic.data(), magic.size()) != 0)
    throw DataError("bad magic in " + path + " (expected " + magic + ")");

  const auto body_len = buf.size() - 32;
  const auto digest = sha256_raw(buf.data(), body_len);
  if (std::memcmp(digest.data(), buf.data() + body_len, 32) != 0)
    throw DataError("digest mismatch (corrupt file): " + path);

  const std::uint64_t mlen = get_u64le(buf.data() + magic.size());
  const std::size_t moff = magic.size() + 8;
  if (moff + mlen > body_len) throw DataError("bad manifest length: " + path);

  Container c;
  try {
    c.manifest = nlohmann::json::parse(buf.begin() + moff,
                                       buf.begin() + moff + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest JSON in " + path + ": " + e.what());
  }
  c.payload.assign(buf.begin() + moff + mlen, buf.begin() + body_len);
  return c;
}

std::string file_sha256(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
  return sha256_hex(buf);
}

}  // namespace mdfsc
