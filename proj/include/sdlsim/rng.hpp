#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sdlsim {

// splitmix64: used to decorrelate seeds before handing them to mt19937_64.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed) {
    std::uint64_t s = seed;
    return splitmix64(s);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(mix_seed(seed));
}

// FNV-1a over a byte string; used for study cell hashing and config hashing.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace sdlsim
