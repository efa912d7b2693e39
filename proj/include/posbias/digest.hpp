#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace posbias {

/// Order-sensitive 64-bit FNV-1a. Stable across platforms and runs; used for
/// trial ids, design checksums and container integrity fields.
class Fnv1a64 {
 public:
  Fnv1a64& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= static_cast<uint64_t>(c);
      hash_ *= kPrime;
    }
    return *this;
  }

  Fnv1a64& update_u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (8 * i)) & 0xffu;
      hash_ *= kPrime;
    }
    return *this;
  }

  uint64_t value() const { return hash_; }
  std::string hex() const;

  static constexpr uint64_t kOffsetBasis = 14695981039346656037ull;
  static constexpr uint64_t kPrime = 1099511628211ull;

 private:
  uint64_t hash_ = kOffsetBasis;
};

/// 16-char lowercase hex encoding of a 64-bit value.
std::string hex_u64(uint64_t v);

}  // namespace posbias
