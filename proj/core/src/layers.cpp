#include "nkem/layers.hpp"

#include <cmath>

namespace nkem {

namespace {

// Output extent for one axis: floor((in + 2*pad - k)/stride) + 1.
int out_extent(int in, int k, int stride) {
    const int pad = (k - 1) / 2;
    return (in + 2 * pad - k) / stride + 1;
}

// Valid output range [lo, hi) for a kernel tap: input index
// stride*o + tap - pad must lie in [0, in).
void tap_range(int in, int out, int tap, int pad, int stride, int& lo, int& hi) {
    lo = std::max(0, (pad - tap + stride - 1) / stride);
    const int last = in - 1 + pad - tap;
    hi = last < 0 ? 0 : std::min(out, last / stride + 1);
}

}  // namespace

void ensure_activation(Tensor& t, ActShape s) {
    if (t.shape.size() == 4 && act_shape(t) == s) return;
    t.shape = {s.c, s.d, s.h, s.w};
    t.data.assign(t.numel(), 0.0);
    t.grad.clear();
}

ConvDims conv_dims(const Tensor& weight, int stride) {
    require(weight.shape.size() == 5, "conv: weight must be rank 5 {oc,ic,kd,kh,kw}");
    require(stride == 1 || stride == 2, "conv: stride must be 1 or 2");
    ConvDims cd{weight.shape[0], weight.shape[1], weight.shape[2], weight.shape[3],
                weight.shape[4], stride};
    require(cd.kd % 2 == 1 && cd.kh % 2 == 1 && cd.kw % 2 == 1, "conv: kernel extents must be odd");
    return cd;
}

ActShape conv_out_shape(const ConvDims& cd, ActShape in) {
    require(in.c == cd.ic, "conv: input channel mismatch");
    ActShape out;
    out.c = cd.oc;
    // Axes with kernel extent 1 keep stride 1 (the depth axis in 2D mode).
    out.d = cd.kd == 1 ? in.d : out_extent(in.d, cd.kd, cd.stride);
    out.h = out_extent(in.h, cd.kh, cd.stride);
    out.w = out_extent(in.w, cd.kw, cd.stride);
    require(out.d >= 1 && out.h >= 1 && out.w >= 1, "conv: output shape collapsed");
    return out;
}

void conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                  Tensor& y) {
    const ConvDims cd = conv_dims(weight, stride);
    const ActShape in = act_shape(x);
    const ActShape out = conv_out_shape(cd, in);
    require(bias.shape.size() == 1 && bias.shape[0] == cd.oc, "conv: bias shape mismatch");
    ensure_activation(y, out);

    const int pd = (cd.kd - 1) / 2, ph = (cd.kh - 1) / 2, pw = (cd.kw - 1) / 2;
    const int sd = cd.kd == 1 ? 1 : stride;
    const std::size_t in_plane = static_cast<std::size_t>(in.h) * in.w;
    const std::size_t out_plane = static_cast<std::size_t>(out.h) * out.w;

    for (int oc = 0; oc < cd.oc; ++oc) {
        double* ybase = y.data.data() + static_cast<std::size_t>(oc) * out.d * out_plane;
        std::fill(ybase, ybase + static_cast<std::size_t>(out.d) * out_plane, bias.data[oc]);
    }
    for (int oc = 0; oc < cd.oc; ++oc) {
        for (int ic = 0; ic < cd.ic; ++ic) {
            const double* wbase =
                weight.data.data() +
                ((static_cast<std::size_t>(oc) * cd.ic + ic) * cd.kd) * cd.kh * cd.kw;
            for (int od = 0; od < out.d; ++od) {
                for (int kd = 0; kd < cd.kd; ++kd) {
                    const int id = sd * od + kd - pd;
                    if (id < 0 || id >= in.d) continue;
                    for (int oh = 0; oh < out.h; ++oh) {
                        double* yrow = y.data.data() +
                                       (static_cast<std::size_t>(oc) * out.d + od) * out_plane +
                                       static_cast<std::size_t>(oh) * out.w;
                        for (int kh = 0; kh < cd.kh; ++kh) {
                            const int ih = stride * oh + kh - ph;
                            if (ih < 0 || ih >= in.h) continue;
                            const double* xrow =
                                x.data.data() +
                                (static_cast<std::size_t>(ic) * in.d + id) * in_plane +
                                static_cast<std::size_t>(ih) * in.w;
                            const double* wrow = wbase + (kd * cd.kh + kh) * cd.kw;
                            for (int kw = 0; kw < cd.kw; ++kw) {
                                const double wv = wrow[kw];
                                int lo, hi;
                                tap_range(in.w, out.w, kw, pw, stride, lo, hi);
                                const double* xp = xrow + (stride * lo + kw - pw);
                                if (stride == 1) {
                                    for (int ow = lo; ow < hi; ++ow) yrow[ow] += wv * xp[ow - lo];
                                } else {
                                    for (int ow = lo; ow < hi; ++ow)
                                        yrow[ow] += wv * xp[2 * (ow - lo)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const Tensor& x, Tensor& weight, Tensor& bias, int stride, const Tensor& gy,
                   Tensor* gx) {
    const ConvDims cd = conv_dims(weight, stride);
    const ActShape in = act_shape(x);
    const ActShape out = conv_out_shape(cd, in);
    require(act_shape(gy) == out, "conv_backward: upstream gradient shape mismatch");
    weight.ensure_grad();
    bias.ensure_grad();

    const int pd = (cd.kd - 1) / 2, ph = (cd.kh - 1) / 2, pw = (cd.kw - 1) / 2;
    const int sd = cd.kd == 1 ? 1 : stride;
    const std::size_t in_plane = static_cast<std::size_t>(in.h) * in.w;
    const std::size_t out_plane = static_cast<std::size_t>(out.h) * out.w;

    for (int oc = 0; oc < cd.oc; ++oc) {
        const double* gybase = gy.data.data() + static_cast<std::size_t>(oc) * out.d * out_plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(out.d) * out_plane; ++i)
            acc += gybase[i];
        bias.grad[oc] += acc;
    }

    double* gxdata = nullptr;
    if (gx != nullptr) {
        ensure_activation(*gx, in);
        std::fill(gx->data.begin(), gx->data.end(), 0.0);
        gxdata = gx->data.data();
    }

    for (int oc = 0; oc < cd.oc; ++oc) {
        for (int ic = 0; ic < cd.ic; ++ic) {
            const std::size_t wslab =
                ((static_cast<std::size_t>(oc) * cd.ic + ic) * cd.kd) * cd.kh * cd.kw;
            double* gwbase = weight.grad.data() + wslab;
            const double* wbase = weight.data.data() + wslab;
            for (int od = 0; od < out.d; ++od) {
                for (int kd = 0; kd < cd.kd; ++kd) {
                    const int id = sd * od + kd - pd;
                    if (id < 0 || id >= in.d) continue;
                    for (int oh = 0; oh < out.h; ++oh) {
                        const double* gyrow =
                            gy.data.data() +
                            (static_cast<std::size_t>(oc) * out.d + od) * out_plane +
                            static_cast<std::size_t>(oh) * out.w;
                        for (int kh = 0; kh < cd.kh; ++kh) {
                            const int ih = stride * oh + kh - ph;
                            if (ih < 0 || ih >= in.h) continue;
                            const std::size_t xoff =
                                (static_cast<std::size_t>(ic) * in.d + id) * in_plane +
                                static_cast<std::size_t>(ih) * in.w;
                            const double* xrow = x.data.data() + xoff;
                            double* gxrow = gxdata == nullptr ? nullptr : gxdata + xoff;
                            for (int kw = 0; kw < cd.kw; ++kw) {
                                int lo, hi;
                                tap_range(in.w, out.w, kw, pw, stride, lo, hi);
                                if (hi <= lo) continue;
                                const int xi0 = stride * lo + kw - pw;
                                double acc = 0.0;
                                if (stride == 1) {
                                    const double* xp = xrow + xi0;
                                    for (int ow = lo; ow < hi; ++ow) acc += gyrow[ow] * xp[ow - lo];
                                } else {
                                    for (int ow = lo; ow < hi; ++ow)
                                        acc += gyrow[ow] * xrow[xi0 + 2 * (ow - lo)];
                                }
                                gwbase[(kd * cd.kh + kh) * cd.kw + kw] += acc;
                                if (gxrow != nullptr) {
                                    const double wv = wbase[(kd * cd.kh + kh) * cd.kw + kw];
                                    if (stride == 1) {
                                        double* xp = gxrow + xi0;
                                        for (int ow = lo; ow < hi; ++ow)
                                            xp[ow - lo] += wv * gyrow[ow];
                                    } else {
                                        for (int ow = lo; ow < hi; ++ow)
                                            gxrow[xi0 + 2 * (ow - lo)] += wv * gyrow[ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& delta, Tensor& y,
                  NormCache& cache) {
    const ActShape s = act_shape(x);
    require(gamma.shape.size() == 1 && gamma.shape[0] == s.c, "norm: gamma shape mismatch");
    require(delta.shape.size() == 1 && delta.shape[0] == s.c, "norm: delta shape mismatch");
    ensure_activation(y, s);
    const std::size_t m = s.spatial();
    cache.mean.assign(s.c, 0.0);
    cache.inv_std.assign(s.c, 0.0);
    cache.xhat.resize(x.data.size());
    for (int c = 0; c < s.c; ++c) {
        const double* xc = x.data.data() + c * m;
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) mu += xc[i];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) var += (xc[i] - mu) * (xc[i] - mu);
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        cache.mean[c] = mu;
        cache.inv_std[c] = inv;
        double* xh = cache.xhat.data() + c * m;
        double* yc = y.data.data() + c * m;
        const double g = gamma.data[c], dl = delta.data[c];
        for (std::size_t i = 0; i < m; ++i) {
            xh[i] = (xc[i] - mu) * inv;
            yc[i] = g * xh[i] + dl;
        }
    }
}

void norm_backward(const Tensor& x, Tensor& gamma, Tensor& delta, const NormCache& cache,
                   const Tensor& gy, Tensor& gx) {
    const ActShape s = act_shape(x);
    require(act_shape(gy) == s, "norm_backward: gradient shape mismatch");
    require(cache.xhat.size() == x.data.size(), "norm_backward: missing forward cache");
    ensure_activation(gx, s);
    gamma.ensure_grad();
    delta.ensure_grad();
    const std::size_t m = s.spatial();
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int c = 0; c < s.c; ++c) {
        const double* gyc = gy.data.data() + c * m;
        const double* xh = cache.xhat.data() + c * m;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            s1 += gyc[i];
            s2 += gyc[i] * xh[i];
        }
        gamma.grad[c] += s2;
        delta.grad[c] += s1;
        const double g = gamma.data[c];
        const double inv = cache.inv_std[c];
        double* gxc = gx.data.data() + c * m;
        for (std::size_t i = 0; i < m; ++i) {
            gxc[i] = g * inv * (gyc[i] - inv_m * s1 - xh[i] * inv_m * s2);
        }
    }
}

void lrelu_forward(const Tensor& x, Tensor& y) {
    ensure_activation(y, act_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        y.data[i] = v > 0.0 ? v : kLReluSlope * v;
    }
}

void lrelu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    require(gy.data.size() == x.data.size(), "lrelu_backward: gradient shape mismatch");
    ensure_activation(gx, act_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        gx.data[i] = gy.data[i] * (x.data[i] > 0.0 ? 1.0 : kLReluSlope);
    }
}

void relu_forward(const Tensor& x, Tensor& y) {
    ensure_activation(y, act_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = std::max(x.data[i], 0.0);
}

void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    require(gy.data.size() == x.data.size(), "relu_backward: gradient shape mismatch");
    ensure_activation(gx, act_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        gx.data[i] = x.data[i] > 0.0 ? gy.data[i] : 0.0;
    }
}

namespace {

struct AxisTap {
    int i0, i1;
    double w0, w1;
};

// Half-pixel-aligned factor-2 interpolation taps for one axis.
std::vector<AxisTap> upsample_taps(int in, int out) {
    std::vector<AxisTap> taps(out);
    for (int i = 0; i < out; ++i) {
        const double src = (i + 0.5) / 2.0 - 0.5;
        const int i0 = static_cast<int>(std::floor(src));
        const double f = src - i0;
        taps[i] = {std::clamp(i0, 0, in - 1), std::clamp(i0 + 1, 0, in - 1), 1.0 - f, f};
    }
    return taps;
}

}  // namespace

ActShape upsample_out_shape(ActShape in) {
    ActShape out = in;
    out.d = in.d == 1 ? 1 : 2 * in.d;
    out.h = 2 * in.h;
    out.w = 2 * in.w;
    return out;
}

void upsample_forward(const Tensor& x, Tensor& y) {
    const ActShape in = act_shape(x);
    const ActShape out = upsample_out_shape(in);
    ensure_activation(y, out);
    const auto td =
        in.d == 1 ? std::vector<AxisTap>{{0, 0, 1.0, 0.0}} : upsample_taps(in.d, out.d);
    const auto th = upsample_taps(in.h, out.h);
    const auto tw = upsample_taps(in.w, out.w);
    const std::size_t in_plane = static_cast<std::size_t>(in.h) * in.w;
    const std::size_t out_plane = static_cast<std::size_t>(out.h) * out.w;
    for (int c = 0; c < in.c; ++c) {
        const double* xc = x.data.data() + static_cast<std::size_t>(c) * in.d * in_plane;
        double* yc = y.data.data() + static_cast<std::size_t>(c) * out.d * out_plane;
        for (int od = 0; od < out.d; ++od) {
            const AxisTap& ad = td[od];
            for (int oh = 0; oh < out.h; ++oh) {
                const AxisTap& ah = th[oh];
                const double* r00 = xc + ad.i0 * in_plane + static_cast<std::size_t>(ah.i0) * in.w;
                const double* r01 = xc + ad.i0 * in_plane + static_cast<std::size_t>(ah.i1) * in.w;
                const double* r10 = xc + ad.i1 * in_plane + static_cast<std::size_t>(ah.i0) * in.w;
                const double* r11 = xc + ad.i1 * in_plane + static_cast<std::size_t>(ah.i1) * in.w;
                double* yrow = yc + od * out_plane + static_cast<std::size_t>(oh) * out.w;
                for (int ow = 0; ow < out.w; ++ow) {
                    const AxisTap& aw = tw[ow];
                    const double v0 = ah.w0 * (aw.w0 * r00[aw.i0] + aw.w1 * r00[aw.i1]) +
                                      ah.w1 * (aw.w0 * r01[aw.i0] + aw.w1 * r01[aw.i1]);
                    const double v1 = ah.w0 * (aw.w0 * r10[aw.i0] + aw.w1 * r10[aw.i1]) +
                                      ah.w1 * (aw.w0 * r11[aw.i0] + aw.w1 * r11[aw.i1]);
                    yrow[ow] = ad.w0 * v0 + ad.w1 * v1;
                }
            }
        }
    }
}

void upsample_backward(ActShape in, const Tensor& gy, Tensor& gx) {
    const ActShape out = upsample_out_shape(in);
    require(act_shape(gy) == out, "upsample_backward: gradient shape mismatch");
    ensure_activation(gx, in);
    std::fill(gx.data.begin(), gx.data.end(), 0.0);
    const auto td =
        in.d == 1 ? std::vector<AxisTap>{{0, 0, 1.0, 0.0}} : upsample_taps(in.d, out.d);
    const auto th = upsample_taps(in.h, out.h);
    const auto tw = upsample_taps(in.w, out.w);
    const std::size_t in_plane = static_cast<std::size_t>(in.h) * in.w;
    const std::size_t out_plane = static_cast<std::size_t>(out.h) * out.w;
    for (int c = 0; c < in.c; ++c) {
        double* xc = gx.data.data() + static_cast<std::size_t>(c) * in.d * in_plane;
        const double* yc = gy.data.data() + static_cast<std::size_t>(c) * out.d * out_plane;
        for (int od = 0; od < out.d; ++od) {
            const AxisTap& ad = td[od];
            for (int oh = 0; oh < out.h; ++oh) {
                const AxisTap& ah = th[oh];
                const double* yrow = yc + od * out_plane + static_cast<std::size_t>(oh) * out.w;
                double* r00 = xc + ad.i0 * in_plane + static_cast<std::size_t>(ah.i0) * in.w;
                double* r01 = xc + ad.i0 * in_plane + static_cast<std::size_t>(ah.i1) * in.w;
                double* r10 = xc + ad.i1 * in_plane + static_cast<std::size_t>(ah.i0) * in.w;
                double* r11 = xc + ad.i1 * in_plane + static_cast<std::size_t>(ah.i1) * in.w;
                for (int ow = 0; ow < out.w; ++ow) {
                    const AxisTap& aw = tw[ow];
                    const double g = yrow[ow];
                    r00[aw.i0] += g * ad.w0 * ah.w0 * aw.w0;
                    r00[aw.i1] += g * ad.w0 * ah.w0 * aw.w1;
                    r01[aw.i0] += g * ad.w0 * ah.w1 * aw.w0;
                    r01[aw.i1] += g * ad.w0 * ah.w1 * aw.w1;
                    r10[aw.i0] += g * ad.w1 * ah.w0 * aw.w0;
                    r10[aw.i1] += g * ad.w1 * ah.w0 * aw.w1;
                    r11[aw.i0] += g * ad.w1 * ah.w1 * aw.w0;
                    r11[aw.i1] += g * ad.w1 * ah.w1 * aw.w1;
                }
            }
        }
    }
}

void add_forward(const Tensor& a, const Tensor& b, Tensor& y) {
    require(act_shape(a) == act_shape(b), "add: shape mismatch");
    ensure_activation(y, act_shape(a));
    for (std::size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
}

}  // namespace nkem
