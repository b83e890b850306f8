#pragma once

#include <cstdint>

namespace qrs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream seed for sub-task `index` of a run seeded with `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t salt = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(salt)) + index);
}

}  // namespace qrs
