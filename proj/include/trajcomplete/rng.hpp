#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace traj {

/// Deterministic random source used everywhere randomness is needed.
///
/// All draws are derived from a single 64-bit seed through mt19937_64 plus
/// hand-rolled distributions (the standard library does not pin down the
/// distribution algorithms, so we implement uniform / normal ourselves to
/// keep outputs bit-identical across compilers and platforms).
///
/// Child streams are derived with `child(k)`: the k-th child seed is
/// splitmix64(splitmix64(seed) + k). Consumers that need several independent
/// streams (masks, noise, coefficient draws) take numbered children so the
/// draw order of one stream never disturbs another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    Rng child(std::uint64_t stream) const {
        return Rng(splitmix64(splitmix64(seed_) + stream));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + uniform01() * (b - a); }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller; the sine mate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Fisher-Yates shuffle, deterministic given the stream state.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace traj
