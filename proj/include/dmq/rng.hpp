#pragma once

#include <cstdint>
#include <random>

namespace dmq {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent substream seeds from a
/// (master seed, counter) pair so that streams never depend on consumption order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t counter) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

inline Rng make_substream(std::uint64_t master, std::uint64_t counter) {
  return Rng(substream_seed(master, counter));
}

}  // namespace dmq
