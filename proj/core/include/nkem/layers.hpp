#pragma once

#include "nkem/tensor.hpp"

namespace nkem {

// Layer primitives used by the residual U-net. Forward passes write the
// output activation; backward passes consume the upstream gradient,
// accumulate parameter gradients into the parameter tensors' grad buffers,
// and produce the input gradient. Convolutions are odd-kernel, zero-padded
// "same" shapes; a stride of 2 halves every axis whose kernel extent
// exceeds 1 (the depth axis is untouched in 2D mode where kd = 1).

struct ConvDims {
    int oc, ic, kd, kh, kw;
    int stride;
};

ConvDims conv_dims(const Tensor& weight, int stride);
ActShape conv_out_shape(const ConvDims& cd, ActShape in);

/// Resizes t to the given activation shape if needed (contents undefined).
void ensure_activation(Tensor& t, ActShape s);

void conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                  Tensor& y);
/// Accumulates into weight.grad / bias.grad; gx may be null when the input
/// gradient is not needed (network input).
void conv_backward(const Tensor& x, Tensor& weight, Tensor& bias, int stride, const Tensor& gy,
                   Tensor* gx);

/// Per-channel spatial normalization (batch-size-1 reading of BN) with
/// learned scale/shift: y = gamma * (x - mu) / sqrt(var + eps) + delta.
inline constexpr double kNormEps = 1e-5;

struct NormCache {
    std::vector<double> mean, inv_std;  // per channel
    std::vector<double> xhat;           // normalized activations
};

void norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& delta, Tensor& y,
                  NormCache& cache);
void norm_backward(const Tensor& x, Tensor& gamma, Tensor& delta, const NormCache& cache,
                   const Tensor& gy, Tensor& gx);

inline constexpr double kLReluSlope = 0.01;

void lrelu_forward(const Tensor& x, Tensor& y);
void lrelu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);
void relu_forward(const Tensor& x, Tensor& y);
void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

/// Factor-2 bilinear (trilinear when d > 1) upsampling with half-pixel
/// alignment: source coordinate (i + 0.5)/2 - 0.5, edges clamped.
ActShape upsample_out_shape(ActShape in);
void upsample_forward(const Tensor& x, Tensor& y);
void upsample_backward(ActShape in_shape, const Tensor& gy, Tensor& gx);

/// y = a + b (elementwise); the skip-connection add.
void add_forward(const Tensor& a, const Tensor& b, Tensor& y);

}  // namespace nkem
