#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace minimax_iv {

/// SplitMix64 finalizer. Mixes one 64-bit word into a well-distributed one.
inline std::uint64_t splitmix64(std::uint64_t v) {
  v += 0x9E3779B97F4A7C15ULL;
  v = (v ^ (v >> 30)) * 0xBF58476D1CE4E5B9ULL;
  v = (v ^ (v >> 27)) * 0x94D049BB133111EBULL;
  return v ^ (v >> 31);
}

/// Derives an independent stream seed from a master seed and a path of keys,
/// e.g. derive_seed(master, {cell, rep}). Order of keys matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t k : keys) s = splitmix64(s ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return s;
}

/// FNV-1a, for turning names into stream keys.
inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

}  // namespace minimax_iv
