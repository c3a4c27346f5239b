#pragma once

#include <cmath>
#include <cstdint>

// Counter-based deterministic RNG. Every draw is a pure function of
// (seed, stream, counter), so results are reproducible across platforms,
// thread counts and call orders. Used for the random-projection attention
// ensemble and for synthetic test models.

namespace csaseg::rng {

inline uint64_t splitmix(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline uint64_t hash3(uint64_t seed, uint64_t stream, uint64_t counter) {
    uint64_t h = splitmix(seed + 0x9e3779b97f4a7c15ULL);
    h = splitmix(h ^ (stream + 0x9e3779b97f4a7c15ULL));
    h = splitmix(h ^ (counter + 0x9e3779b97f4a7c15ULL));
    return h;
}

// uniform in [0, 1)
inline double uniform(uint64_t seed, uint64_t stream, uint64_t counter) {
    return double(hash3(seed, stream, counter) >> 11) * 0x1.0p-53;
}

// standard normal via Box-Muller; one draw consumes two counter slots
inline float gaussian(uint64_t seed, uint64_t stream, uint64_t counter) {
    const double u1 = 1.0 - uniform(seed, stream, 2 * counter);     // (0, 1]
    const double u2 = uniform(seed, stream, 2 * counter + 1);
    const double pi = 3.14159265358979323846;
    return float(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2));
}

// convenience wrapper when a sequence of draws is wanted
struct Stream {
    uint64_t seed = 0;
    uint64_t stream = 0;
    uint64_t counter = 0;

    double next_uniform() { return uniform(seed, stream, counter++); }
    float next_gaussian() { return gaussian(seed, stream, counter++); }
};

} // namespace csaseg::rng
