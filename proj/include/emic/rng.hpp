#pragma once

#include <cmath>
#include <cstdint>

#include "emic/num_array.hpp"

namespace emic {

// Counter-based deterministic generator: output i is splitmix64's finalizer
// applied to seed + (i+1)*golden-ratio increment. The stream depends only on
// (seed, draw index), so replaying a call sequence is exact on any platform.
class CounterRng {
  public:
    static constexpr const char* kName = "splitmix64";

    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1), 53-bit resolution.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0,1]; safe as a log() argument.
    double next_uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller with a cached spare.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform_pos();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586477 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Uniform integer in [0, n); rejection sampled.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_{0};
    bool has_spare_{false};
    double spare_{0.0};
};

// N(0, stddev^2) samples; deterministic for a given (seed, shape).
inline NumArray prng_normal(std::uint64_t seed, std::vector<std::size_t> shape, double stddev) {
    if (stddev < 0) throw ConfigError("prng_normal: stddev must be non-negative");
    NumArray out(std::move(shape));
    if (stddev == 0.0) return out;
    CounterRng rng(seed);
    for (double& v : out.vec()) v = rng.next_normal() * stddev;
    return out;
}

}  // namespace emic
