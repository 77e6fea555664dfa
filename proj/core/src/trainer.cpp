#include "nkem/trainer.hpp"

namespace nkem {

namespace {

LossResult eval_loss(LossKind kind, const Image& target, const Image& beta, const Image& w) {
    return kind == LossKind::kQ ? loss_q(target, beta, w) : loss_mse(target, beta);
}

bool improves(LossKind kind, double value, double best) {
    return kind == LossKind::kQ ? value > best : value < best;
}

}  // namespace

TrainResult train_to_target(UNet& net, NetParams& params, AdamState& state, const Tensor& z,
                            const Image& target, const Image& w, LossKind kind, int subiters) {
    require(subiters >= 1, "train_to_target: subiters must be >= 1");

    TrainResult result;
    std::vector<std::vector<double>> best_data;
    Tensor upstream;
    const double sign = kind == LossKind::kQ ? -1.0 : 1.0;  // Adam minimizes

    for (int s = 0; s <= subiters; ++s) {
        const Tensor& out = net.forward(params, z);
        Image beta = output_to_image(out);
        const LossResult loss = eval_loss(kind, target, beta, w);
        result.trace.push_back(loss.value);
        if (s == 0 || improves(kind, loss.value, result.best)) {
            result.best = loss.value;
            result.best_index = s;
            result.best_beta = std::move(beta);
            best_data.clear();
            for (const Tensor& t : params.tensors) best_data.push_back(t.data);
        }
        if (s == subiters) break;
        ensure_activation(upstream, act_shape(out));
        for (std::size_t i = 0; i < upstream.data.size(); ++i) {
            upstream.data[i] = sign * loss.grad[i];
        }
        params.zero_grads();
        net.backward(params, upstream);
        adam_step(state, params);
    }
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        params.tensors[i].data = best_data[i];
    }
    return result;
}

}  // namespace nkem
