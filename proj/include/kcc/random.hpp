#pragma once

// Deterministic random points for the self-check command and the test
// suites. mt19937_64 output is pinned by the standard; scaling the raw bits
// directly keeps the stream identical across standard libraries, unlike
// std::uniform_real_distribution.

#include <random>

#include "kcc/linalg.hpp"

namespace kcc {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in [lo, hi].
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (double& x : v) x = uniform(rng, lo, hi);
    return v;
}

} // namespace kcc
