#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dprl {

/// All stochastic components draw from explicitly passed engines of this type.
using Rng = std::mt19937_64;

/// splitmix64 finalizer; maps (base seed, stream id) to well-separated seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace dprl

namespace dprl {

/// 64-bit FNV-1a of a byte string; used for architecture and config fingerprints.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dprl
