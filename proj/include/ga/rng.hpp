#pragma once

#include <cmath>
#include <cstdint>

namespace ga {

// splitmix64-based generator. Hand-rolled so that streams are bit-stable
// across platforms and standard library versions.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed + 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, bound)
    uint64_t uniform_int(uint64_t bound) { return next_u64() % bound; }

    // standard normal via Box-Muller (one value per call, no cached state)
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

// Derives an independent stream id from components (e.g. base seed + epoch).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

} // namespace ga
