#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace slipfuse {

// Deterministic, implementation-independent PRNG (splitmix64 core).
// std::mt19937 + std::uniform_* produce implementation-defined streams;
// every reproducibility contract in this library (splits, synthetic data,
// dropout, shuffles) routes through this class so results are stable across
// standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound). bound must be > 0.
    uint64_t next_below(uint64_t bound) {
        const uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; caches the second draw of each pair.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_ = mag * std::sin(two_pi * u2);
        has_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; has_spare_ = false; }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// One-shot hash of a 64-bit value; used to derive independent sub-streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace slipfuse
