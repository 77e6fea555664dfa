#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "nkem/types.hpp"

namespace nkem {

/// Dense named tensor with an optional gradient buffer. Activations use
/// shape {c, d, h, w} (d = 1 in 2D); conv weights use {oc, ic, kd, kh, kw};
/// biases and norm parameters use {c}. Data is row-major, last axis fastest.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until ensure_grad()

    Tensor() = default;
    Tensor(std::string name_, std::vector<int> shape_)
        : name(std::move(name_)), shape(std::move(shape_)) {
        data.assign(numel(), 0.0);
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int s : shape) {
            require(s > 0, "Tensor: shape entries must be > 0");
            n *= static_cast<std::size_t>(s);
        }
        return n;
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

/// Activation layout helpers; all activations are rank-4 {c, d, h, w}.
struct ActShape {
    int c = 0, d = 1, h = 0, w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(c) * d * static_cast<std::size_t>(h) * w;
    }
    std::size_t spatial() const { return static_cast<std::size_t>(d) * h * w; }
    bool operator==(const ActShape&) const = default;
};

inline ActShape act_shape(const Tensor& t) {
    require(t.shape.size() == 4, "expected rank-4 activation tensor");
    return ActShape{t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
}

inline Tensor make_activation(const std::string& name, ActShape s) {
    return Tensor(name, {s.c, s.d, s.h, s.w});
}

}  // namespace nkem
