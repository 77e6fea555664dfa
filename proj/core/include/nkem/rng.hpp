#pragma once

#include <cstdint>
#include <random>

namespace nkem {

/// SplitMix64 finalizer; used to derive stream seeds (e.g. per frame or
/// per realization) from a base seed: derived = splitmix64(base + index).
std::uint64_t splitmix64(std::uint64_t x);

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base + index);
}

/// Deterministic random stream. All mappings from raw 64-bit draws to
/// doubles are written out explicitly so results are identical across
/// standard libraries (std::*_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1] (safe as a log argument).
    double uniform_pos() {
        return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double normal();

    /// Poisson sample: exact inversion by sequential search for mean < 30,
    /// normal approximation with continuity correction otherwise (rounded,
    /// clamped at zero).
    std::uint64_t poisson(double mean);

private:
    std::mt19937_64 gen_;
};

}  // namespace nkem
