#pragma once

#include "nkem/losses.hpp"
#include "nkem/optim.hpp"
#include "nkem/unet.hpp"

namespace nkem {

enum class LossKind { kQ, kMse };

struct TrainResult {
    std::vector<double> trace;  // objective value at every visited iterate
    double best = 0.0;
    int best_index = 0;  // 0 = the starting parameters
    Image best_beta;     // network output at the returned iterate
};

/// Runs `subiters` full-image Adam steps on the chosen objective (Q is
/// maximized, MSE minimized) and leaves `params` at the best-objective
/// iterate visited, the starting point included. For the Q loss, `target`
/// is the KEM coefficient update alpha_hat and `w` the combined weight;
/// for MSE, `target` is the fitting target and `w` is ignored.
TrainResult train_to_target(UNet& net, NetParams& params, AdamState& state, const Tensor& z,
                            const Image& target, const Image& w, LossKind kind, int subiters);

}  // namespace nkem
