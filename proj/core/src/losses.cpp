#include "nkem/losses.hpp"

#include <cmath>

namespace nkem {

LossResult loss_q(const Image& alpha_hat, const Image& beta, const Image& w) {
    const std::size_t n = beta.size();
    require(alpha_hat.size() == n && w.size() == n, "loss_q: dimension mismatch");
    LossResult out;
    out.grad = Image(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        require(std::isfinite(alpha_hat[j]) && std::isfinite(beta[j]) && std::isfinite(w[j]),
                "loss_q: non-finite input");
        require(alpha_hat[j] >= 0.0 && w[j] >= 0.0, "loss_q: negative input");
        if (w[j] == 0.0) continue;
        const double b = std::max(beta[j], kBetaFloor);
        out.value += w[j] * (alpha_hat[j] * std::log(b) - beta[j]);
        out.grad[j] = w[j] * (alpha_hat[j] / b - 1.0);
    }
    return out;
}

LossResult loss_mse(const Image& target, const Image& beta) {
    const std::size_t n = beta.size();
    require(target.size() == n, "loss_mse: dimension mismatch");
    LossResult out;
    out.grad = Image(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        require(std::isfinite(target[j]) && std::isfinite(beta[j]), "loss_mse: non-finite input");
        const double d = beta[j] - target[j];
        out.value += d * d;
        out.grad[j] = 2.0 * d;
    }
    return out;
}

}  // namespace nkem
