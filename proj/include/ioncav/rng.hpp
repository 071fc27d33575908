#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic random numbers. std::mt19937_64 has a fully specified
// sequence; the variate transforms below are written out explicitly because
// std::uniform_real_distribution and friends are implementation-defined and
// would break byte-identical reruns across standard libraries.

namespace ioncav {

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Seed for logical stream `stream` and element `index` under a base seed.
// Trajectory i always sees the same sequence no matter which worker runs it.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t h = splitmix64(base ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
    return splitmix64(h ^ (0xD1B54A32D192ED03ull * (index + 1)));
}

class rng {
  public:
    explicit rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log argument.
    double uniform_pos() { return 1.0 - uniform(); }

    double exponential() { return -std::log(uniform_pos()); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (deterministic; one cached value).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double r = std::sqrt(2.0 * exponential());
        const double phi = 6.28318530717958647692 * uniform();
        cached_ = r * std::sin(phi);
        have_cached_ = true;
        return r * std::cos(phi);
    }

    // Exact Poisson sampling. Knuth's product method is used in chunks of
    // mean <= 30 (Poisson is additive), which avoids exp() underflow for
    // large means while keeping the distribution exact.
    std::uint64_t poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 30.0) {
            total += poisson_knuth(30.0);
            mean -= 30.0;
        }
        if (mean > 0.0) total += poisson_knuth(mean);
        return total;
    }

    std::uint64_t raw() { return eng_(); }

  private:
    std::uint64_t poisson_knuth(double mean) {
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double prod = uniform_pos();
        while (prod > limit) {
            ++k;
            prod *= uniform_pos();
        }
        return k;
    }

    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace ioncav
