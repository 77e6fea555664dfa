#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nkem/layers.hpp"
#include "nkem/tensor.hpp"

namespace nkem {

/// Architecture of the residual U-net: `scales` resolution levels with
/// channel counts base_channels * 2^level, additive skip connections, and a
/// single-channel ReLU head. identity_bypass replaces the network with
/// beta = ReLU(z[0] + a) for a zero-initialized per-pixel parameter a;
/// it is only used by reduction tests and needs the input spatial dims.
struct UNetDescriptor {
    int in_channels = 3;
    int scales = 3;
    int base_channels = 16;
    bool three_d = false;
    bool identity_bypass = false;
    int bypass_d = 1, bypass_h = 0, bypass_w = 0;

    void validate() const;
    bool operator==(const UNetDescriptor&) const = default;
};

/// Ordered named parameter tensors plus the descriptor they were built for.
struct NetParams {
    UNetDescriptor desc;
    std::vector<Tensor> tensors;

    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    void zero_grads();
    void ensure_grads();
    std::size_t total_params() const;
};

/// Deterministic He-uniform initialization (norm scale 1, shift 0, biases 0
/// except the head bias at 1 so the initial output is near-uniform positive).
NetParams init_params(const UNetDescriptor& desc, std::uint64_t seed);

/// Stateful runner holding the activation caches needed by backward().
class UNet {
  public:
    explicit UNet(UNetDescriptor desc);

    /// Output activation {1, d, h, w}; valid until the next forward call.
    const Tensor& forward(const NetParams& params, const Tensor& z);
    /// Accumulates d(output . upstream)/d(theta) into params' grad buffers.
    /// Requires a preceding forward with the same params/z.
    void backward(NetParams& params, const Tensor& upstream);

    const UNetDescriptor& descriptor() const { return desc_; }

  private:
    struct BlockCache {
        Tensor x, conv_out, norm_out, act_out;
        NormCache nc;
    };

    void forward_block(const NetParams& params, const std::string& prefix, int stride,
                       const Tensor& x, BlockCache& cache);
    /// Returns the gradient w.r.t. the block input in gx (nullable).
    void backward_block(NetParams& params, const std::string& prefix, int stride,
                        BlockCache& cache, const Tensor& gy, Tensor* gx);

    UNetDescriptor desc_;
    bool has_forward_ = false;
    std::vector<BlockCache> enc_, down_, dec_;
    std::vector<Tensor> up_out_;
    std::vector<Tensor> dec_sum_;
    Tensor head_conv_out_, out_;
    Tensor bypass_pre_;
    // backward scratch
    Tensor g_a_, g_b_, g_skip_;
};

/// Flattens the single-channel output activation into an Image (the {d,h,w}
/// layout matches the grid's row-major pixel order).
Image output_to_image(const Tensor& out);

/// Builds the network input tensor from composite prior images: one channel
/// per composite, standardized to zero mean / unit variance (channels with
/// zero variance become all-zero).
Tensor make_network_input(const std::vector<Image>& composites, const Grid& grid);

// "NKNP" checkpoint: descriptor header plus named f64 tensors, little-endian.
void save_params(const std::filesystem::path& path, const NetParams& params);
NetParams load_params(const std::filesystem::path& path);

}  // namespace nkem
