#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace dva {

// splitmix64: tiny, fully specified generator. We avoid <random> distributions
// so that streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    bool coin(double p_true) { return uniform() < p_true; }

    // Box-Muller; one value per call keeps the stream layout simple.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Normal(0, sigma) truncated to [-2 sigma, 2 sigma] by rejection.
    double truncated_normal(double sigma) {
        for (;;) {
            double v = normal();
            if (v >= -2.0 && v <= 2.0) return v * sigma;
        }
    }

    // Fisher-Yates over [0, n) index arrays.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Per-tensor seeding: deterministic and independent of initialization order.
inline Rng named_rng(std::uint64_t seed, const std::string& name) {
    return Rng(seed ^ fnv1a64(name) ^ 0x6a09e667f3bcc908ull);
}

}  // namespace dva
