#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mfsde {
namespace rng {

/// SplitMix64 finalizer; the counter-based building block for all randomness.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

/// Deterministic sub-seed for nested simulations (tags identify the context).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag0, std::uint64_t tag1 = 0,
                                 std::uint64_t tag2 = 0) {
    return combine(combine(combine(seed, tag0), tag1), tag2);
}

inline double to_unit(std::uint64_t u) {
    // (0,1]; never 0, so log() below is safe
    return (static_cast<double>(u >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal draw addressed by (seed, stream, counter); O(1) random
/// access, bit-reproducible, thread-safe.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const std::uint64_t key = combine(combine(seed, stream), counter);
    const double u1 = to_unit(mix64(key));
    const double u2 = to_unit(mix64(key ^ 0xda3e39cb94b95bdbULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace rng

/// Brownian increments for an ensemble, derived on demand from a seed.
/// Nothing is stored: increment(p, j) is a pure function of (seed, p, j),
/// which is what makes common-random-number comparisons and parallel
/// reproducibility trivial.
class NoiseBank {
public:
    NoiseBank(std::uint64_t seed, int n_paths, int n_steps, double dt)
        : seed_(seed), n_paths_(n_paths), n_steps_(n_steps), dt_(dt),
          sqrt_dt_(std::sqrt(dt)) {}

    std::uint64_t seed() const { return seed_; }
    int n_paths() const { return n_paths_; }
    int n_steps() const { return n_steps_; }
    double dt() const { return dt_; }

    /// Gaussian increment ~ N(0, dt) for path p, step j.
    double increment(int p, int j) const {
        return sqrt_dt_ * rng::normal(seed_, static_cast<std::uint64_t>(p),
                                      static_cast<std::uint64_t>(j));
    }

private:
    std::uint64_t seed_;
    int n_paths_, n_steps_;
    double dt_, sqrt_dt_;
};

} // namespace mfsde
