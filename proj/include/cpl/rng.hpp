#pragma once

#include <cstdint>
#include <random>

namespace cpl {

/// Deterministic random stream. Wraps mt19937_64 but owns every draw
/// transformation, so identical seeds give identical streams on any platform
/// (std::uniform_real_distribution and friends are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of entropy.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound). Rejection-sampled, unbiased.
    std::uint64_t next_below(std::uint64_t bound);

    /// Standard normal via Box-Muller.
    double gaussian();

    /// Independent child stream; mixes the label into fresh seed material.
    Rng fork(std::uint64_t label);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer; used for seed mixing and stable key hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace cpl
