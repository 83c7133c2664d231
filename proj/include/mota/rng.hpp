#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mota {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed derivation: the result depends only on the base seed
/// and the path, so adding a consumer never shifts anyone else's stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t p : path)
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

// Purpose tags for derive_seed paths.
namespace seed_tag {
inline constexpr std::uint64_t stream = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t simplex = 4;
inline constexpr std::uint64_t mode_init = 5;
inline constexpr std::uint64_t split = 6;
inline constexpr std::uint64_t pretext = 7;
} // namespace seed_tag

} // namespace mota
