#include "nkem/optim.hpp"

#include <cmath>

namespace nkem {

AdamState AdamState::create(const NetParams& params, double lr) {
    require(lr > 0.0, "AdamState: lr must be > 0");
    AdamState s;
    s.lr = lr;
    for (const Tensor& t : params.tensors) {
        s.m.emplace_back(t.data.size(), 0.0);
        s.v.emplace_back(t.data.size(), 0.0);
    }
    return s;
}

void adam_step(AdamState& state, NetParams& params) {
    require(state.m.size() == params.tensors.size(), "adam_step: state/params mismatch");
    for (const Tensor& t : params.tensors) {
        require(t.grad.size() == t.data.size(), "adam_step: missing gradients");
        for (double g : t.grad) {
            require(std::isfinite(g), "adam_step: non-finite gradient");
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        Tensor& t = params.tensors[i];
        require(state.m[i].size() == t.data.size(), "adam_step: moment shape mismatch");
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (std::size_t k = 0; k < t.data.size(); ++k) {
            const double g = t.grad[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            t.data[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace nkem
