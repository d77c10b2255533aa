#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace wce {

/// SplitMix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Key for the stream identified by (seed, counter, domain). Streams with
/// different keys are statistically independent.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t counter,
                                   std::uint64_t domain = 0) {
    return mix64(mix64(seed ^ mix64(domain)) ^ (counter * 0xD1B54A32D192ED03ull));
}

/// Portable scalar RNG. std::mt19937_64 output is fully specified by the
/// standard; the distributions below are written out so results do not
/// depend on the standard library vendor.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace wce
