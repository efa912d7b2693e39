#include "posbias/digest.hpp"

#include <cstdio>

namespace posbias {

std::string hex_u64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf, 16);
}

std::string Fnv1a64::hex() const { return hex_u64(hash_); }

}  // namespace posbias
