#pragma once

#include "nkem/unet.hpp"

namespace nkem {

/// Bias-corrected Adam over a NetParams parameter set.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m, v;  // per tensor, per element

    static AdamState create(const NetParams& params, double lr = 1e-3);
};

/// One descent step using the tensors' grad buffers. Throws on non-finite
/// gradients (the training step is aborted, parameters untouched).
void adam_step(AdamState& state, NetParams& params);

}  // namespace nkem
