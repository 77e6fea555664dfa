#pragma once

#include "nkem/types.hpp"

namespace nkem {

struct LossResult {
    double value = 0.0;
    Image grad;  // d value / d beta
};

/// Weighted-Poisson surrogate Q = sum_j w_j (alpha_hat_j log beta_j - beta_j)
/// over pixels with w_j > 0, with beta floored at eps inside the log and the
/// gradient w_j (alpha_hat_j / beta_j - 1) evaluated at the floored beta.
/// The trainer MAXIMIZES this.
inline constexpr double kBetaFloor = 1e-8;

LossResult loss_q(const Image& alpha_hat, const Image& beta, const Image& w);

/// Squared error ||beta - target||^2 with gradient 2 (beta - target).
LossResult loss_mse(const Image& target, const Image& beta);

}  // namespace nkem
