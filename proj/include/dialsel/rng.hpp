#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dialsel {

// FNV-1a 64-bit. Used for stable, platform-independent hashing of strings
// (tokens, sub-seed labels, dialogue ids). Not for untrusted input.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic RNG with identical output on every platform. std::mt19937
// would be portable too, but the std distributions are not, so we produce
// doubles and bounded indices ourselves.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1), 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). n must be > 0. Plain modulo: the bias is far below
    // anything observable at the n used here, and it stays portable.
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

    bool next_bool(double p_true) { return next_double() < p_true; }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Every stage draws from a named stream derived from the single run seed,
// so stages stay reproducible independently of each other.
inline std::uint64_t sub_seed(std::uint64_t root, std::string_view label) {
    std::uint64_t s = root ^ fnv1a64(label);
    return splitmix64(s);
}

} // namespace dialsel
