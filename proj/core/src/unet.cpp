#include "nkem/unet.hpp"

#include <cmath>
#include <fstream>

#include "nkem/io.hpp"
#include "nkem/rng.hpp"

namespace nkem {

void UNetDescriptor::validate() const {
    require(in_channels >= 1, "UNetDescriptor: in_channels must be >= 1");
    require(scales >= 1, "UNetDescriptor: scales must be >= 1");
    require(base_channels >= 1, "UNetDescriptor: base_channels must be >= 1");
    if (identity_bypass) {
        require(bypass_h >= 1 && bypass_w >= 1 && bypass_d >= 1,
                "UNetDescriptor: identity bypass needs input spatial dims");
    }
}

Tensor& NetParams::at(std::string_view name) {
    for (Tensor& t : tensors)
        if (t.name == name) return t;
    throw std::invalid_argument("NetParams: no tensor named " + std::string(name));
}

const Tensor& NetParams::at(std::string_view name) const {
    for (const Tensor& t : tensors)
        if (t.name == name) return t;
    throw std::invalid_argument("NetParams: no tensor named " + std::string(name));
}

void NetParams::zero_grads() {
    for (Tensor& t : tensors) {
        t.ensure_grad();
        t.zero_grad();
    }
}

void NetParams::ensure_grads() {
    for (Tensor& t : tensors) t.ensure_grad();
}

std::size_t NetParams::total_params() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors) n += t.data.size();
    return n;
}

namespace {

int level_channels(const UNetDescriptor& d, int level) { return d.base_channels << level; }

void append_conv(NetParams& p, const std::string& prefix, int in_c, int out_c, int kd) {
    p.tensors.emplace_back(prefix + ".conv.w", std::vector<int>{out_c, in_c, kd, 3, 3});
    p.tensors.emplace_back(prefix + ".conv.b", std::vector<int>{out_c});
}

void append_norm(NetParams& p, const std::string& prefix, int c) {
    p.tensors.emplace_back(prefix + ".norm.gamma", std::vector<int>{c});
    p.tensors.emplace_back(prefix + ".norm.delta", std::vector<int>{c});
}

}  // namespace

NetParams init_params(const UNetDescriptor& desc, std::uint64_t seed) {
    desc.validate();
    NetParams p;
    p.desc = desc;
    if (desc.identity_bypass) {
        p.tensors.emplace_back("bypass.add",
                               std::vector<int>{1, desc.bypass_d, desc.bypass_h, desc.bypass_w});
        return p;  // zero-initialized: output starts as the clamped channel 0
    }

    const int kd = desc.three_d ? 3 : 1;
    append_conv(p, "enc0", desc.in_channels, level_channels(desc, 0), kd);
    append_norm(p, "enc0", level_channels(desc, 0));
    for (int i = 1; i < desc.scales; ++i) {
        const std::string down = "down" + std::to_string(i - 1);
        append_conv(p, down, level_channels(desc, i - 1), level_channels(desc, i), kd);
        append_norm(p, down, level_channels(desc, i));
        const std::string enc = "enc" + std::to_string(i);
        append_conv(p, enc, level_channels(desc, i), level_channels(desc, i), kd);
        append_norm(p, enc, level_channels(desc, i));
    }
    for (int i = desc.scales - 2; i >= 0; --i) {
        const std::string dec = "dec" + std::to_string(i);
        append_conv(p, dec, level_channels(desc, i + 1), level_channels(desc, i), kd);
        append_norm(p, dec, level_channels(desc, i));
    }
    append_conv(p, "head", level_channels(desc, 0), 1, kd);

    Rng rng(seed);
    for (Tensor& t : p.tensors) {
        if (t.name.ends_with(".conv.w")) {
            // He-uniform over fan-in.
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < t.shape.size(); ++i) fan_in *= t.shape[i];
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = (2.0 * rng.uniform() - 1.0) * bound;
        } else if (t.name.ends_with(".norm.gamma")) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (t.name == "head.conv.b") {
            t.data[0] = 1.0;
        }
        // other biases and norm shifts stay zero
    }
    return p;
}

UNet::UNet(UNetDescriptor desc) : desc_(std::move(desc)) {
    desc_.validate();
    if (!desc_.identity_bypass) {
        enc_.resize(desc_.scales);
        down_.resize(desc_.scales - 1);
        dec_.resize(desc_.scales - 1);
        up_out_.resize(desc_.scales - 1);
        dec_sum_.resize(desc_.scales - 1);
    }
}

void UNet::forward_block(const NetParams& params, const std::string& prefix, int stride,
                         const Tensor& x, BlockCache& cache) {
    cache.x = x;
    conv_forward(cache.x, params.at(prefix + ".conv.w"), params.at(prefix + ".conv.b"), stride,
                 cache.conv_out);
    norm_forward(cache.conv_out, params.at(prefix + ".norm.gamma"),
                 params.at(prefix + ".norm.delta"), cache.norm_out, cache.nc);
    lrelu_forward(cache.norm_out, cache.act_out);
}

void UNet::backward_block(NetParams& params, const std::string& prefix, int stride,
                          BlockCache& cache, const Tensor& gy, Tensor* gx) {
    lrelu_backward(cache.norm_out, gy, g_a_);
    norm_backward(cache.conv_out, params.at(prefix + ".norm.gamma"),
                  params.at(prefix + ".norm.delta"), cache.nc, g_a_, g_b_);
    conv_backward(cache.x, params.at(prefix + ".conv.w"), params.at(prefix + ".conv.b"), stride,
                  g_b_, gx);
}

const Tensor& UNet::forward(const NetParams& params, const Tensor& z) {
    require(params.desc == desc_, "UNet: params built for a different descriptor");
    const ActShape in = act_shape(z);

    if (desc_.identity_bypass) {
        require(in.c >= 1 && in.d == desc_.bypass_d && in.h == desc_.bypass_h &&
                    in.w == desc_.bypass_w,
                "UNet: bypass input shape mismatch");
        const Tensor& add = params.at("bypass.add");
        ensure_activation(bypass_pre_, ActShape{1, in.d, in.h, in.w});
        const std::size_t m = bypass_pre_.data.size();
        for (std::size_t i = 0; i < m; ++i) bypass_pre_.data[i] = z.data[i] + add.data[i];
        relu_forward(bypass_pre_, out_);
        has_forward_ = true;
        return out_;
    }

    require(in.c == desc_.in_channels, "UNet: input channel count mismatch");
    const int div = 1 << (desc_.scales - 1);
    require(in.h % div == 0 && in.w % div == 0, "UNet: spatial dims must divide 2^(scales-1)");
    if (desc_.three_d) require(in.d % div == 0, "UNet: depth must divide 2^(scales-1)");
    require(desc_.three_d || in.d == 1, "UNet: 2D network requires depth-1 input");

    forward_block(params, "enc0", 1, z, enc_[0]);
    for (int i = 1; i < desc_.scales; ++i) {
        forward_block(params, "down" + std::to_string(i - 1), 2, enc_[i - 1].act_out,
                      down_[i - 1]);
        forward_block(params, "enc" + std::to_string(i), 1, down_[i - 1].act_out, enc_[i]);
    }
    const Tensor* cur = &enc_[desc_.scales - 1].act_out;
    for (int i = desc_.scales - 2; i >= 0; --i) {
        upsample_forward(*cur, up_out_[i]);
        forward_block(params, "dec" + std::to_string(i), 1, up_out_[i], dec_[i]);
        add_forward(dec_[i].act_out, enc_[i].act_out, dec_sum_[i]);
        cur = &dec_sum_[i];
    }
    conv_forward(*cur, params.at("head.conv.w"), params.at("head.conv.b"), 1, head_conv_out_);
    relu_forward(head_conv_out_, out_);
    has_forward_ = true;
    return out_;
}

void UNet::backward(NetParams& params, const Tensor& upstream) {
    require(has_forward_, "UNet: backward called without a forward pass");
    params.ensure_grads();

    if (desc_.identity_bypass) {
        Tensor& add = params.at("bypass.add");
        require(upstream.data.size() == bypass_pre_.data.size(),
                "UNet: upstream gradient shape mismatch");
        for (std::size_t i = 0; i < add.grad.size(); ++i) {
            if (bypass_pre_.data[i] > 0.0) add.grad[i] += upstream.data[i];
        }
        return;
    }

    relu_backward(head_conv_out_, upstream, g_skip_);
    Tensor g_cur;
    const Tensor& head_in = desc_.scales >= 2 ? dec_sum_[0] : enc_[0].act_out;
    conv_backward(head_in, params.at("head.conv.w"), params.at("head.conv.b"), 1, g_skip_,
                  &g_cur);

    // Skip-add gradients flowing into each encoder activation, consumed when
    // the backward sweep reaches that encoder level.
    std::vector<Tensor> g_enc(desc_.scales);
    for (int i = 0; i <= desc_.scales - 2; ++i) {
        // g_cur is the gradient at dec_sum_[i]; both summands receive it.
        g_enc[i] = g_cur;
        backward_block(params, "dec" + std::to_string(i), 1, dec_[i], g_cur, &g_skip_);
        upsample_backward(act_shape(i + 1 <= desc_.scales - 2 ? dec_sum_[i + 1]
                                                              : enc_[desc_.scales - 1].act_out),
                          g_skip_, g_cur);
    }
    for (int i = desc_.scales - 1; i >= 1; --i) {
        if (i <= desc_.scales - 2) {
            // merge the skip-add contribution with the downstream gradient
            for (std::size_t k = 0; k < g_cur.data.size(); ++k) g_cur.data[k] += g_enc[i].data[k];
        }
        backward_block(params, "enc" + std::to_string(i), 1, enc_[i], g_cur, &g_skip_);
        backward_block(params, "down" + std::to_string(i - 1), 2, down_[i - 1], g_skip_, &g_cur);
    }
    if (desc_.scales >= 2) {
        for (std::size_t k = 0; k < g_cur.data.size(); ++k) g_cur.data[k] += g_enc[0].data[k];
    }
    backward_block(params, "enc0", 1, enc_[0], g_cur, nullptr);
}

Image output_to_image(const Tensor& out) {
    const ActShape s = act_shape(out);
    require(s.c == 1, "output_to_image: expected single-channel output");
    return Image(out.data);
}

Tensor make_network_input(const std::vector<Image>& composites, const Grid& grid) {
    require(!composites.empty(), "make_network_input: no composite channels");
    const std::size_t j_count = grid.num_pixels();
    Tensor z("z", {static_cast<int>(composites.size()), grid.nz, grid.ny, grid.nx});
    for (std::size_t c = 0; c < composites.size(); ++c) {
        require(composites[c].size() == j_count, "make_network_input: size mismatch");
        double mean = sum(composites[c].data) / static_cast<double>(j_count);
        double var = 0.0;
        for (double v : composites[c].data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(j_count);
        const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
        for (std::size_t j = 0; j < j_count; ++j) {
            z.data[c * j_count + j] = (composites[c][j] - mean) * inv;
        }
    }
    return z;
}

namespace {
constexpr char kMagic[4] = {'N', 'K', 'N', 'P'};
}

void save_params(const std::filesystem::path& path, const NetParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "save_params: cannot open " + path.string());
    out.write(kMagic, 4);
    bin::write_u64(out, 1);  // version
    const UNetDescriptor& d = params.desc;
    bin::write_u64(out, static_cast<std::uint64_t>(d.in_channels));
    bin::write_u64(out, static_cast<std::uint64_t>(d.scales));
    bin::write_u64(out, static_cast<std::uint64_t>(d.base_channels));
    bin::write_u64(out, d.three_d ? 1 : 0);
    bin::write_u64(out, d.identity_bypass ? 1 : 0);
    bin::write_u64(out, static_cast<std::uint64_t>(d.bypass_d));
    bin::write_u64(out, static_cast<std::uint64_t>(d.bypass_h));
    bin::write_u64(out, static_cast<std::uint64_t>(d.bypass_w));
    bin::write_u64(out, params.tensors.size());
    for (const Tensor& t : params.tensors) {
        bin::write_u64(out, t.name.size());
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        bin::write_u64(out, t.shape.size());
        for (int s : t.shape) bin::write_u64(out, static_cast<std::uint64_t>(s));
        for (double v : t.data) bin::write_f64(out, v);
    }
    out.flush();
    require(out.good(), "save_params: write failed for " + path.string());
}

NetParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_params: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(in.good() && std::equal(magic, magic + 4, kMagic),
            "load_params: bad magic in " + path.string());
    require(bin::read_u64(in) == 1, "load_params: unsupported version");
    NetParams p;
    p.desc.in_channels = static_cast<int>(bin::read_u64(in));
    p.desc.scales = static_cast<int>(bin::read_u64(in));
    p.desc.base_channels = static_cast<int>(bin::read_u64(in));
    p.desc.three_d = bin::read_u64(in) != 0;
    p.desc.identity_bypass = bin::read_u64(in) != 0;
    p.desc.bypass_d = static_cast<int>(bin::read_u64(in));
    p.desc.bypass_h = static_cast<int>(bin::read_u64(in));
    p.desc.bypass_w = static_cast<int>(bin::read_u64(in));
    const std::uint64_t n_tensors = bin::read_u64(in);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        const std::uint64_t name_len = bin::read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const std::uint64_t rank = bin::read_u64(in);
        std::vector<int> shape(rank);
        for (auto& s : shape) s = static_cast<int>(bin::read_u64(in));
        Tensor t(std::move(name), std::move(shape));
        for (double& v : t.data) v = bin::read_f64(in);
        p.tensors.push_back(std::move(t));
    }
    require(in.good(), "load_params: truncated file " + path.string());
    // Cross-check tensor names/shapes against a fresh initialization.
    const NetParams ref = init_params(p.desc, 0);
    require(ref.tensors.size() == p.tensors.size(), "load_params: tensor count mismatch");
    for (std::size_t i = 0; i < ref.tensors.size(); ++i) {
        require(ref.tensors[i].name == p.tensors[i].name &&
                    ref.tensors[i].shape == p.tensors[i].shape,
                "load_params: tensor layout mismatch");
    }
    return p;
}

}  // namespace nkem
