#include "nkem/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nkem {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double Rng::normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::invalid_argument("poisson: mean must be finite and >= 0");
    if (mean == 0.0) return 0;

    if (mean < 30.0) {
        // Inversion by sequential search; one uniform per sample.
        const double u = uniform();
        double p = std::exp(-mean);
        double cum = p;
        std::uint64_t k = 0;
        // cum approaches 1; bound the walk far in the tail.
        const std::uint64_t k_max = 2000;
        while (u > cum && k < k_max) {
            ++k;
            p *= mean / static_cast<double>(k);
            cum += p;
        }
        return k;
    }

    const double x = mean + normal() * std::sqrt(mean);
    const double rounded = std::floor(x + 0.5);
    return rounded <= 0.0 ? 0 : static_cast<std::uint64_t>(rounded);
}

}  // namespace nkem
