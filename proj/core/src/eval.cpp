#include "nkem/eval.hpp"

#include <cmath>
#include <limits>

namespace nkem {

void RoiMask::validate(std::size_t j_count) const {
    require(!pixels.empty(), "RoiMask: empty mask");
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        require(pixels[i] < j_count, "RoiMask: pixel index out of range");
        if (i > 0) require(pixels[i] > pixels[i - 1], "RoiMask: indices must be ascending");
    }
}

RoiMask RoiMask::from_region(const Phantom& phantom, int region) {
    require(region >= 0 && region < kNumRegions, "RoiMask: bad region");
    RoiMask m;
    m.name = region_names()[region];
    for (std::size_t j = 0; j < phantom.label_map.size(); ++j) {
        if (phantom.label_map[j] == region) m.pixels.push_back(static_cast<std::uint32_t>(j));
    }
    require(!m.pixels.empty(), "RoiMask: region has no pixels");
    return m;
}

double image_mse_db(const Image& xhat, const Image& xtrue) {
    require(xhat.size() == xtrue.size(), "image_mse_db: dimension mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < xhat.size(); ++j) {
        const double d = xhat[j] - xtrue[j];
        num += d * d;
        den += xtrue[j] * xtrue[j];
    }
    require(den > 0.0, "image_mse_db: all-zero truth");
    if (num == 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(num / den);
}

double roi_mean(const Image& x, const RoiMask& roi) {
    roi.validate(x.size());
    double acc = 0.0;
    for (std::uint32_t j : roi.pixels) acc += x[j];
    return acc / static_cast<double>(roi.pixels.size());
}

EnsembleResult ensemble_bias_sd(const std::vector<double>& c, double c_true) {
    require(c.size() >= 2, "ensemble_bias_sd: need at least 2 realizations");
    require(c_true > 0.0, "ensemble_bias_sd: c_true must be > 0");
    EnsembleResult res;
    res.c = c;
    res.c_true = c_true;
    res.n_r = static_cast<int>(c.size());
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= static_cast<double>(c.size());
    double ss = 0.0;
    for (double v : c) ss += (v - mean) * (v - mean);
    res.bias = std::abs(mean - c_true) / c_true;
    res.sd = std::sqrt(ss / static_cast<double>(c.size() - 1)) / c_true;
    return res;
}

double noise_sd_background(const Image& x, const RoiMask& roi) {
    roi.validate(x.size());
    require(roi.pixels.size() >= 2, "noise_sd_background: need at least 2 pixels");
    double mean = 0.0;
    for (std::uint32_t j : roi.pixels) mean += x[j];
    mean /= static_cast<double>(roi.pixels.size());
    require(mean > 0.0, "noise_sd_background: zero mean over ROI");
    double ss = 0.0;
    for (std::uint32_t j : roi.pixels) ss += (x[j] - mean) * (x[j] - mean);
    return std::sqrt(ss / static_cast<double>(roi.pixels.size() - 1)) / mean;
}

}  // namespace nkem
