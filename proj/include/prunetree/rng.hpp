#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace prunetree {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a path of stream ids.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

// Stream tags.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kProbe = 3;
inline constexpr std::uint64_t kCandidate = 4;
inline constexpr std::uint64_t kCoin = 5;
inline constexpr std::uint64_t kData = 6;
inline constexpr std::uint64_t kPostSelect = 7;
}  // namespace stream

}  // namespace prunetree
