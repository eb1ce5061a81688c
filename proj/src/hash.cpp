#include "cohertrace/hash.hpp"

#include <openssl/evp.h>

#include "cohertrace/errors.hpp"

namespace cohertrace {

Digest sha256(std::string_view bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error("sha256 failed");
  }
  return out;
}

std::string to_hex(const Digest& digest, std::size_t max_chars) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  if (s.size() > max_chars) s.resize(max_chars);
  return s;
}

}  // namespace cohertrace
