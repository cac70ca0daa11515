#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace orthodoc {

// Deterministic PRNG used everywhere randomness is needed (embeddings,
// weight init, coordinate sampling, bootstrap resampling). splitmix64 is
// platform-stable, so seeded results are reproducible byte-for-byte.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [-1, 1).
    double next_signed() { return 2.0 * next_double() - 1.0; }

    // Uniform integer in [0, n). n must be > 0. Modulo bias is acceptable
    // and the exact rule is part of the documented contract.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

// FNV-1a 64-bit. Used for corpus fingerprints and for keying token
// embedding vectors by (surface, seed).
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

} // namespace orthodoc
