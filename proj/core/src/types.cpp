#include "nkem/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nkem {

double ProjGeometry::angle(int a) const {
    return std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(const std::vector<double>& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc);
}

double sum(const std::vector<double>& a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc;
}

bool all_finite(const std::vector<double>& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "rel_l2_error: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

}  // namespace nkem
