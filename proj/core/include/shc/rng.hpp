#pragma once

#include "shc/types.hpp"

#include <cstdint>
#include <random>

namespace shc {

/// Seeded generator that can be split into independent child streams.
/// Children are keyed by an integer so the same (seed, key) always yields the
/// same stream regardless of evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

    Rng split(std::uint64_t key) const { return Rng(mix(seed_ ^ mix(key + 0x9e3779b97f4a7c15ULL))); }

    std::uint64_t seed() const { return seed_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    Vector normal_vector(Index n);
    Matrix normal_matrix(Index rows, Index cols);

    std::mt19937_64& engine() { return engine_; }

    /// splitmix64 finalizer.
    static std::uint64_t mix(std::uint64_t x);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace shc
