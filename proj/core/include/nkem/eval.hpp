#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nkem/phantom.hpp"
#include "nkem/types.hpp"

namespace nkem {

struct RoiMask {
    std::string name;
    std::vector<std::uint32_t> pixels;  // ascending, unique

    void validate(std::size_t j_count) const;
    static RoiMask from_region(const Phantom& phantom, int region);
};

/// Image MSE in dB: 10 log10(||xhat - xtrue||^2 / ||xtrue||^2); -inf when
/// the images are identical.
double image_mse_db(const Image& xhat, const Image& xtrue);

double roi_mean(const Image& x, const RoiMask& roi);

struct EnsembleResult {
    std::vector<double> c;  // per-realization ROI means
    double c_true = 0.0;
    double bias = 0.0;  // |mean(c) - c_true| / c_true
    double sd = 0.0;    // sample SD of c over realizations, / c_true
    int n_r = 0;
};

EnsembleResult ensemble_bias_sd(const std::vector<double>& c, double c_true);

/// Coefficient of variation (sample SD / mean) over a background ROI.
double noise_sd_background(const Image& x, const RoiMask& roi);

}  // namespace nkem
