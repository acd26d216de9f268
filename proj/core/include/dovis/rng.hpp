#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dovis {

/// Seeded generator with deterministic stream splitting. Children derived
/// with split() are independent of the parent's draw position, so adding
/// draws to one stream never perturbs another.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const noexcept { return seed_; }
    std::mt19937_64 &engine() noexcept { return engine_; }

    double uniform();
    double uniform(double lo, double hi);
    std::size_t uniform_index(std::size_t n);
    bool bernoulli(double p);
    double normal(double mean, double sd);
    double lognormal(double log_mean, double log_sd);
    double gamma(double shape, double scale);
    double beta(double a, double b);

    /// Index drawn proportionally to non-negative weights. Weights must not all be zero.
    std::size_t categorical(std::span<const double> weights);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

} // namespace dovis
