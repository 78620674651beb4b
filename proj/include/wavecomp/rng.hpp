#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace wavecomp {

inline uint64_t fnv1a64(const void* bytes, size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

// SplitMix64. Self-contained so seeded results do not depend on the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    // Named stream: independent deterministic sequence per (seed, name).
    Rng(uint64_t seed, std::string_view stream)
        : state_(seed ^ (0x9e3779b97f4a7c15ull + fnv1a64(stream))) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased integer in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller; the sine branch is discarded to keep state independent of
    // call interleaving.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = next_double();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
        return mean + stddev * z;
    }

    // Normal(0, stddev) resampled until within clip_sigmas standard deviations.
    double truncated_normal(double stddev, double clip_sigmas = 2.0) {
        for (;;) {
            double z = normal(0.0, 1.0);
            if (std::abs(z) <= clip_sigmas) return z * stddev;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

} // namespace wavecomp
