// Acceptance gate. Runs ten end-to-end criteria — reduction identities,
// likelihood monotonicity, surrogate minorization and tangency, count
// preservation, finite-difference gradient checks, trend reproduction on a
// 64x64 ensemble, ADMM sanity, and byte-level pipeline reproducibility —
// and prints one PASS/FAIL line per criterion. Exits nonzero on any FAIL.
//
// Every tolerance is pinned here as a named constant next to the criterion
// that uses it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nkem/config.hpp"
#include "nkem/eval.hpp"
#include "nkem/experiment.hpp"
#include "nkem/io.hpp"
#include "nkem/layers.hpp"
#include "nkem/losses.hpp"
#include "nkem/phantom.hpp"
#include "nkem/pipeline.hpp"
#include "nkem/projector.hpp"
#include "nkem/recon.hpp"
#include "nkem/rng.hpp"
#include "nkem/simulate.hpp"
#include "nkem/trainer.hpp"
#include "nkem/unet.hpp"
#include "testutil.hpp"

using namespace nkem;
using nkemtest::fd_check_tensor;
using nkemtest::make_small_study;
using nkemtest::random_vec;
using nkemtest::SmallStudy;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- plumbing

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
  public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

  private:
    std::chrono::steady_clock::time_point t0_;
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double worst_drop(const std::vector<IterRecord>& trace) {
    double worst = 0.0;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const double drop = trace[i - 1].loglik - trace[i].loglik;
        worst = std::max(worst, drop / std::max(1.0, std::abs(trace[i - 1].loglik)));
    }
    return worst;
}

UNetDescriptor bypass_desc(int n) {
    UNetDescriptor d;
    d.identity_bypass = true;
    d.in_channels = 1;
    d.bypass_h = n;
    d.bypass_w = n;
    return d;
}

Tensor ones_input(int n) {
    Tensor z("z", {1, 1, n, n});
    std::fill(z.data.begin(), z.data.end(), 1.0);
    return z;
}

/// Kernel built the production way: features from a smoothed reconstruction
/// of the study's own data.
struct StudyPrior {
    Image composite;
    KernelModel kernel;
    Tensor z;
};

StudyPrior study_prior(const SmallStudy& sc, int k, int mlem_iters = 20) {
    StudyPrior pr;
    pr.composite = run_mlem(sc.p, sc.y, sc.r, mlem_iters).x;
    const auto f = extract_features({pr.composite}, sc.grid);
    pr.kernel = build_kernel(f, knn_search(f, k), 1.0);
    pr.z = make_network_input({pr.composite}, sc.grid);
    return pr;
}

// ------------------------------------------------------------ criterion 1

constexpr int kIdentityIters = 60;
constexpr int kBypassOuters = 10;
constexpr double kBypassRelTol = 1e-2;
constexpr double kC1BudgetSeconds = 60.0;

Outcome criterion1() {
    Stopwatch sw;
    // Enough counts that the coefficient scale is O(1): the Adam hover of
    // the bypass fit (~lr per pixel) then sits far below the 1% tracking bar.
    auto sc = make_small_study(32, 71, 0.2, 500000.0);

    // (a) KEM with K = I reproduces ML-EM bit for bit, every iteration.
    std::vector<Image> mlem_iters;
    auto mlem = run_mlem(sc.p, sc.y, sc.r, kIdentityIters, nullptr,
                         [&](int, const Image& x) { mlem_iters.push_back(x); });
    bool bitwise = true;
    int checked = 0;
    auto kem_id = run_kem(sc.p, KernelModel::identity(sc.p.n_cols), sc.y, sc.r, kIdentityIters,
                          nullptr, [&](int it, const Image& x) {
                              const Image& ref = mlem_iters[static_cast<std::size_t>(it - 1)];
                              for (std::size_t j = 0; j < x.size(); ++j)
                                  bitwise &= x[j] == ref[j];
                              ++checked;
                          });
    for (std::size_t i = 0; i < mlem.trace.size(); ++i)
        bitwise &= mlem.trace[i].loglik == kem_id.trace[i].loglik;

    // (b) Neural KEM with the identity-bypass network tracks plain KEM.
    const auto pr = study_prior(sc, 8);
    NeuralKemOptions opt;
    opt.outer_iters = kBypassOuters;
    opt.subiters = 2000;
    opt.lr = 2e-3;
    opt.seed = 1;
    auto neural = run_neural_kem(sc.p, pr.kernel, ones_input(32), bypass_desc(32), sc.y, sc.r, opt);
    auto kem = run_kem(sc.p, pr.kernel, sc.y, sc.r, kBypassOuters);
    const double rel = rel_l2_error(neural.x.data, kem.x.data);

    const double secs = sw.seconds();
    Outcome out;
    out.pass = bitwise && checked == kIdentityIters && rel <= kBypassRelTol &&
               secs < kC1BudgetSeconds;
    out.detail = std::string("kem(K=I) vs mlem ") + (bitwise ? "bitwise equal" : "DIFFERS") +
                 " over " + std::to_string(checked) + " iters; bypass-net vs kem rel err " +
                 fmt(rel) + " (tol " + fmt(kBypassRelTol) + "); " + fmt(secs, 2) + "s of " +
                 fmt(kC1BudgetSeconds, 2) + "s budget";
    return out;
}

// ------------------------------------------------------------ criterion 2

constexpr double kMonoSlack = 1e-9;

Outcome criterion2() {
    double worst = 0.0;
    int runs = 0;
    for (int frame = 0; frame < 3; ++frame) {
        const double target = 6000.0 * std::pow(4.0, frame);  // 6k / 24k / 96k
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            auto sc = make_small_study(24, 100 + seed * 10 + static_cast<std::uint64_t>(frame),
                                       0.2, target);
            worst = std::max(worst, worst_drop(run_mlem(sc.p, sc.y, sc.r, 60).trace));
            const auto pr = study_prior(sc, 8);
            worst = std::max(worst, worst_drop(run_kem(sc.p, pr.kernel, sc.y, sc.r, 60).trace));
            ++runs;
        }
    }
    Outcome out;
    out.pass = worst <= kMonoSlack;
    out.detail = "worst relative log-likelihood drop " + fmt(worst) + " (slack " +
                 fmt(kMonoSlack) + ") over " + std::to_string(runs) +
                 " studies x {mlem, kem} x 60 iters";
    return out;
}

// ------------------------------------------------------------ criterion 3

constexpr int kGuardOuters = 30;

Outcome criterion3() {
    auto sc = make_small_study(32, 77);
    const auto pr = study_prior(sc, 12);

    UNetDescriptor desc;
    desc.in_channels = 1;
    desc.scales = 2;
    desc.base_channels = 8;

    NeuralKemOptions opt;
    opt.outer_iters = kGuardOuters;
    opt.subiters = 60;
    opt.lr = 1e-3;
    opt.seed = 5;
    auto res = run_neural_kem(sc.p, pr.kernel, pr.z, desc, sc.y, sc.r, opt);

    const double worst = worst_drop(res.trace);
    int rejections = 0;
    double worst_q = 0.0;
    for (const IterRecord& rec : res.trace) {
        rejections += rec.guard_rejected ? 1 : 0;
        worst_q = std::max(worst_q, (rec.q_before - rec.q_after) /
                                        std::max(1.0, std::abs(rec.q_before)));
    }
    Outcome out;
    out.pass = worst <= kMonoSlack && worst_q <= kMonoSlack;
    out.detail = "worst log-likelihood drop " + fmt(worst) + ", worst surrogate drop " +
                 fmt(worst_q) + " (slack " + fmt(kMonoSlack) + ") over " +
                 std::to_string(kGuardOuters) + " outers; guard rejections: " +
                 std::to_string(rejections);
    return out;
}

// ------------------------------------------------------------ criterion 4

constexpr int kSurrogateTrials = 100;
constexpr double kSurrogateSlack = 1e-8;
constexpr int kTangencyTrials = 20;
constexpr double kTangencyTol = 1e-5;
constexpr double kC4BudgetSeconds = 300.0;

Outcome criterion4() {
    Stopwatch sw;
    const int n = 16;
    auto sc = make_small_study(n, 81);
    const auto pr = study_prior(sc, 6);
    const auto desc = bypass_desc(n);
    Tensor z("z", {1, 1, n, n});
    {
        Rng rng(82);
        z.data = random_vec(z.numel(), rng, 0.5, 1.5);
    }
    const NetParams theta_n = init_params(desc, 1);

    Rng rng(83);
    int violations = 0;
    double worst_gap = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < kSurrogateTrials; ++t) {
        NetParams theta = theta_n;
        for (Tensor& ten : theta.tensors)
            for (double& v : ten.data) v += 0.05 * (2.0 * rng.uniform() - 1.0);
        const auto gaps = check_surrogate(sc.p, pr.kernel, sc.y, sc.r, desc, theta_n, theta, z);
        worst_gap = std::max(worst_gap, gaps.q_gap - gaps.l_gap);
        if (gaps.q_gap > gaps.l_gap + kSurrogateSlack) ++violations;
    }

    int tangency_fails = 0;
    double worst_tan = 0.0;
    const double h = 1e-5;
    for (int t = 0; t < kTangencyTrials; ++t) {
        std::vector<std::vector<double>> dir;
        for (const Tensor& ten : theta_n.tensors)
            dir.push_back(random_vec(ten.data.size(), rng, -1.0, 1.0));
        auto at_offset = [&](double step) {
            NetParams theta = theta_n;
            for (std::size_t i = 0; i < theta.tensors.size(); ++i)
                for (std::size_t j = 0; j < theta.tensors[i].data.size(); ++j)
                    theta.tensors[i].data[j] += step * dir[i][j];
            return check_surrogate(sc.p, pr.kernel, sc.y, sc.r, desc, theta_n, theta, z);
        };
        const auto plus = at_offset(h);
        const auto minus = at_offset(-h);
        const double dq = (plus.q_gap - minus.q_gap) / (2.0 * h);
        const double dl = (plus.l_gap - minus.l_gap) / (2.0 * h);
        const double err = std::abs(dq - dl) / (1.0 + std::abs(dl));
        worst_tan = std::max(worst_tan, err);
        if (err > kTangencyTol) ++tangency_fails;
    }

    const double secs = sw.seconds();
    Outcome out;
    out.pass = violations == 0 && tangency_fails == 0 && secs < kC4BudgetSeconds;
    out.detail = std::to_string(kSurrogateTrials) + " perturbations, worst Q_gap-L_gap " +
                 fmt(worst_gap) + " (slack " + fmt(kSurrogateSlack) + "), violations " +
                 std::to_string(violations) + "; " + std::to_string(kTangencyTrials) +
                 " directional derivatives, worst mismatch " + fmt(worst_tan) + " (tol " +
                 fmt(kTangencyTol) + "); " + fmt(secs, 2) + "s of " + fmt(kC4BudgetSeconds, 2) +
                 "s budget";
    return out;
}

// ------------------------------------------------------------ criterion 5

constexpr double kCountTol = 1e-10;

Outcome criterion5() {
    // Simulated without background so r = 0 is consistent with the counts.
    auto sc = make_small_study(32, 91, 0.0);
    const auto pr = study_prior(sc, 8);
    const Image s = sensitivity(sc.p);
    const Image w = combined_weight(pr.kernel, s);
    const Sinogram r0(sc.y.size(), 0.0);
    const double total = sum(sc.y.data);

    Image alpha(sc.p.n_cols, 0.0);
    for (std::size_t j = 0; j < alpha.size(); ++j) alpha[j] = w[j] > 0.0 ? 1.0 : 0.0;
    double worst = 0.0;
    for (int it = 1; it <= 60; ++it) {
        alpha = kem_step(sc.p, pr.kernel, sc.y, r0, alpha, w);
        double weighted = 0.0;
        for (std::size_t j = 0; j < alpha.size(); ++j) weighted += w[j] * alpha[j];
        worst = std::max(worst, std::abs(weighted - total) / total);
    }
    Outcome out;
    out.pass = worst <= kCountTol;
    out.detail = "max |sum(w a) - sum(y)|/sum(y) = " + fmt(worst) + " (tol " + fmt(kCountTol) +
                 ") over 60 KEM iterations at r=0";
    return out;
}

// ------------------------------------------------------------ criterion 6

constexpr double kLayerFdTol = 1e-5;
constexpr double kNetFdTol = 1e-4;
constexpr double kFdStep = 1e-4;

Tensor rand_tensor(const std::string& name, std::vector<int> shape, Rng& rng, double lo,
                   double hi) {
    Tensor t(name, std::move(shape));
    t.data = random_vec(t.numel(), rng, lo, hi);
    return t;
}

Outcome criterion6() {
    Rng rng(2024);
    double worst_layer = 0.0;
    std::string worst_name = "none";
    auto track = [&](const std::string& name, double err) {
        if (err > worst_layer) {
            worst_layer = err;
            worst_name = name;
        }
    };

    // conv, 2D stride 1 and 2, and 3D
    for (int stride : {1, 2}) {
        Tensor x = rand_tensor("x", {2, 1, 8, 8}, rng, -1.0, 1.0);
        Tensor w = rand_tensor("w", {3, 2, 1, 3, 3}, rng, -0.5, 0.5);
        Tensor b = rand_tensor("b", {3}, rng, -0.2, 0.2);
        Tensor y;
        conv_forward(x, w, b, stride, y);
        const auto u = random_vec(y.data.size(), rng, -1.0, 1.0);
        Tensor up("u", y.shape);
        up.data = u;
        w.ensure_grad();
        b.ensure_grad();
        w.zero_grad();
        b.zero_grad();
        Tensor gx;
        conv_backward(x, w, b, stride, up, &gx);
        auto loss = [&]() {
            Tensor yy;
            conv_forward(x, w, b, stride, yy);
            double s = 0.0;
            for (std::size_t i = 0; i < yy.data.size(); ++i) s += yy.data[i] * u[i];
            return s;
        };
        const std::string tag = "conv2d.s" + std::to_string(stride);
        track(tag + ".w", fd_check_tensor(loss, w, w.grad, kFdStep, 40, rng).max_err);
        track(tag + ".b", fd_check_tensor(loss, b, b.grad, kFdStep, 3, rng).max_err);
        track(tag + ".x", fd_check_tensor(loss, x, gx.data, kFdStep, 40, rng).max_err);
    }
    {
        Tensor x = rand_tensor("x", {2, 4, 4, 4}, rng, -1.0, 1.0);
        Tensor w = rand_tensor("w", {2, 2, 3, 3, 3}, rng, -0.4, 0.4);
        Tensor b = rand_tensor("b", {2}, rng, -0.2, 0.2);
        Tensor y;
        conv_forward(x, w, b, 1, y);
        const auto u = random_vec(y.data.size(), rng, -1.0, 1.0);
        Tensor up("u", y.shape);
        up.data = u;
        w.ensure_grad();
        b.ensure_grad();
        w.zero_grad();
        b.zero_grad();
        Tensor gx;
        conv_backward(x, w, b, 1, up, &gx);
        auto loss = [&]() {
            Tensor yy;
            conv_forward(x, w, b, 1, yy);
            double s = 0.0;
            for (std::size_t i = 0; i < yy.data.size(); ++i) s += yy.data[i] * u[i];
            return s;
        };
        track("conv3d.w", fd_check_tensor(loss, w, w.grad, kFdStep, 40, rng).max_err);
        track("conv3d.x", fd_check_tensor(loss, x, gx.data, kFdStep, 40, rng).max_err);
    }
    // norm (standardize + affine)
    {
        Tensor x = rand_tensor("x", {3, 1, 6, 6}, rng, -1.0, 1.0);
        Tensor gamma = rand_tensor("gamma", {3}, rng, 0.5, 1.5);
        Tensor delta = rand_tensor("delta", {3}, rng, -0.5, 0.5);
        Tensor y;
        NormCache cache;
        norm_forward(x, gamma, delta, y, cache);
        const auto u = random_vec(y.data.size(), rng, -1.0, 1.0);
        Tensor up("u", y.shape);
        up.data = u;
        gamma.ensure_grad();
        delta.ensure_grad();
        gamma.zero_grad();
        delta.zero_grad();
        Tensor gx;
        norm_backward(x, gamma, delta, cache, up, gx);
        auto loss = [&]() {
            Tensor yy;
            NormCache cc;
            norm_forward(x, gamma, delta, yy, cc);
            double s = 0.0;
            for (std::size_t i = 0; i < yy.data.size(); ++i) s += yy.data[i] * u[i];
            return s;
        };
        track("norm.gamma", fd_check_tensor(loss, gamma, gamma.grad, kFdStep, 3, rng).max_err);
        track("norm.delta", fd_check_tensor(loss, delta, delta.grad, kFdStep, 3, rng).max_err);
        track("norm.x", fd_check_tensor(loss, x, gx.data, kFdStep, 40, rng).max_err);
    }
    // activations, off-kink
    {
        Tensor x("x", {2, 1, 5, 5});
        x.data = random_vec(x.numel(), rng, 0.05, 1.0);
        for (std::size_t i = 0; i < x.data.size(); i += 2) x.data[i] = -x.data[i];
        const auto u = random_vec(x.numel(), rng, -1.0, 1.0);
        Tensor up("u", x.shape);
        up.data = u;
        for (bool leaky : {true, false}) {
            Tensor y;
            if (leaky)
                lrelu_forward(x, y);
            else
                relu_forward(x, y);
            Tensor gx;
            if (leaky)
                lrelu_backward(x, up, gx);
            else
                relu_backward(x, up, gx);
            auto loss = [&]() {
                Tensor yy;
                if (leaky)
                    lrelu_forward(x, yy);
                else
                    relu_forward(x, yy);
                double s = 0.0;
                for (std::size_t i = 0; i < yy.data.size(); ++i) s += yy.data[i] * u[i];
                return s;
            };
            track(leaky ? "lrelu.x" : "relu.x",
                  fd_check_tensor(loss, x, gx.data, kFdStep, 30, rng).max_err);
        }
    }
    // upsample
    {
        Tensor x = rand_tensor("x", {2, 1, 4, 5}, rng, -1.0, 1.0);
        Tensor y;
        upsample_forward(x, y);
        const auto u = random_vec(y.data.size(), rng, -1.0, 1.0);
        Tensor up("u", y.shape);
        up.data = u;
        Tensor gx;
        upsample_backward(act_shape(x), up, gx);
        auto loss = [&]() {
            Tensor yy;
            upsample_forward(x, yy);
            double s = 0.0;
            for (std::size_t i = 0; i < yy.data.size(); ++i) s += yy.data[i] * u[i];
            return s;
        };
        track("upsample.x", fd_check_tensor(loss, x, gx.data, kFdStep, 40, rng).max_err);
    }
    // both losses: analytic gradient vs central differences
    {
        const std::size_t n = 30;
        Image beta(random_vec(n, rng, 0.2, 3.0));
        Image alpha_hat(random_vec(n, rng, 0.1, 2.0));
        Image wq(random_vec(n, rng, 0.2, 2.0));
        wq[4] = 0.0;
        Image target(random_vec(n, rng, -1.0, 1.0));
        const double h = 1e-5;
        for (bool q : {true, false}) {
            const LossResult res =
                q ? loss_q(alpha_hat, beta, wq) : loss_mse(target, beta);
            double err = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double keep = beta[j];
                beta[j] = keep + h;
                const double fp = q ? loss_q(alpha_hat, beta, wq).value
                                    : loss_mse(target, beta).value;
                beta[j] = keep - h;
                const double fm = q ? loss_q(alpha_hat, beta, wq).value
                                    : loss_mse(target, beta).value;
                beta[j] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                err = std::max(err, std::abs(fd - res.grad[j]) /
                                        std::max({1.0, std::abs(fd), std::abs(res.grad[j])}));
            }
            track(q ? "loss_q.grad" : "loss_mse.grad", err);
        }
    }

    // full network, every parameter tensor
    double worst_net = 0.0;
    {
        UNetDescriptor d;
        d.in_channels = 2;
        d.scales = 2;
        d.base_channels = 2;
        auto params = init_params(d, 17);
        UNet net(d);
        Tensor z = rand_tensor("z", {2, 1, 8, 8}, rng, -1.0, 1.0);
        const Tensor& out0 = net.forward(params, z);
        const auto u = random_vec(out0.data.size(), rng, -1.0, 1.0);
        Tensor up("u", out0.shape);
        up.data = u;
        params.ensure_grads();
        params.zero_grads();
        net.forward(params, z);
        net.backward(params, up);
        auto loss = [&]() {
            UNet probe(d);
            const Tensor& o = probe.forward(params, z);
            double s = 0.0;
            for (std::size_t i = 0; i < o.data.size(); ++i) s += o.data[i] * u[i];
            return s;
        };
        for (auto& t : params.tensors) {
            worst_net = std::max(worst_net,
                                 fd_check_tensor(loss, t, t.grad, kFdStep, 6, rng).max_err);
        }
    }

    Outcome out;
    out.pass = worst_layer <= kLayerFdTol && worst_net <= kNetFdTol;
    out.detail = "worst per-layer FD error " + fmt(worst_layer) + " (" + worst_name + ", tol " +
                 fmt(kLayerFdTol) + "); worst full-net FD error " + fmt(worst_net) + " (tol " +
                 fmt(kNetFdTol) + ")";
    return out;
}

// ------------------------------------------------------- criteria 7 and 8

constexpr int kEnsembleRealizations = 5;
constexpr int kEnsembleIters = 60;
constexpr int kEnsembleSubiters = 60;
constexpr double kC7BudgetSeconds = 1800.0;

struct EnsembleOutcome {
    Outcome c7;
    Outcome c8;
};

EnsembleOutcome criteria7and8() {
    Stopwatch sw;
    EnsembleOutcome eo;

    // 64x64 study, three frames calibrated to ~20k / 120k / 400k events.
    Grid grid(64, 64, 4.0);
    ProjGeometry geom(64, 96, 4.0);
    const SparseMatrix p = build_system_matrix(grid, geom);

    PhantomSpec spec;
    spec.gray.push_back(Ellipse{0, 0, 0, 110, 100, 0});
    spec.white.push_back(Ellipse{0, -8, 0, 70, 60, 0});
    spec.blood.push_back(Ellipse{-40, 55, 0, 12, 12, 0});
    spec.blood.push_back(Ellipse{40, 55, 0, 12, 12, 0});
    spec.tumor.push_back(Ellipse{35, -35, 0, 16, 16, 0});
    const Phantom ph = make_phantom(grid, spec);
    const RoiMask tumor_roi = RoiMask::from_region(ph, kTumor);

    const double act[kNumRegions] = {0.0, 2.0, 1.0, 6.0, 5.0};  // bg, gray, white, blood, tumor
    Image activity(grid.num_pixels(), 0.0);
    for (std::size_t j = 0; j < activity.size(); ++j)
        activity[j] = act[ph.label_map[j]];
    const std::vector<Image> frames(3, activity);
    // Event split follows frame durations: 486k trues over 4/204/764 s plus
    // 54k background spread evenly = 20k/120k/400k expected per frame.
    const FramingSchedule schedule{std::vector<double>{4.0, 204.0, 764.0}};
    const double kBf = 0.1, kTarget = 540000.0;

    UNetDescriptor desc;
    desc.in_channels = 1;
    desc.scales = 2;
    desc.base_channels = 8;

    // mse[method][frame] over realizations; ROI means on the low-count frame.
    std::vector<std::vector<std::vector<double>>> mse(
        3, std::vector<std::vector<double>>(3));
    const std::vector<int> cp_iters = {10, 20, 30, 40, 50, 60};
    std::vector<std::vector<double>> mlem_roi(cp_iters.size());  // [cp][r]
    std::vector<double> neural_roi;                              // [r]
    double c_true = 0.0;

    for (int r = 0; r < kEnsembleRealizations; ++r) {
        const auto study = simulate_study(p, grid, geom, frames, schedule, kBf, kTarget,
                                          derive_seed(20260825, 1000 + static_cast<std::uint64_t>(r)));
        const auto comps = composite_frames(study, {972.0}, p, 60);
        const auto feats = extract_features(comps, grid);
        const KernelModel kern = build_kernel(feats, knn_search(feats, 24), 1.0);
        const Tensor z = make_network_input(comps, grid);

        for (int m = 0; m < 3; ++m) {
            const Sinogram& y = study.noisy_sinos[static_cast<std::size_t>(m)];
            const Sinogram& bg = study.background_sinos[static_cast<std::size_t>(m)];
            Image truth(grid.num_pixels(), 0.0);
            const double cal = study.scale * schedule.durations_s[static_cast<std::size_t>(m)];
            for (std::size_t j = 0; j < truth.size(); ++j) truth[j] = cal * activity[j];
            if (m == 0 && r == 0) c_true = roi_mean(truth, tumor_roi);

            auto mlem = run_mlem(p, y, bg, kEnsembleIters, nullptr,
                                 [&](int it, const Image& x) {
                                     if (m != 0) return;
                                     for (std::size_t c = 0; c < cp_iters.size(); ++c)
                                         if (cp_iters[c] == it)
                                             mlem_roi[c].push_back(roi_mean(x, tumor_roi));
                                 });
            mse[0][static_cast<std::size_t>(m)].push_back(image_mse_db(mlem.x, truth));

            auto kem = run_kem(p, kern, y, bg, kEnsembleIters);
            mse[1][static_cast<std::size_t>(m)].push_back(image_mse_db(kem.x, truth));

            NeuralKemOptions opt;
            opt.outer_iters = kEnsembleIters;
            opt.subiters = kEnsembleSubiters;
            opt.lr = 1e-3;
            opt.seed = derive_seed(20260825, 2000 + static_cast<std::uint64_t>(r) * 10 +
                                                 static_cast<std::uint64_t>(m));
            auto neural = run_neural_kem(p, kern, z, desc, y, bg, opt);
            mse[2][static_cast<std::size_t>(m)].push_back(image_mse_db(neural.x, truth));
            if (m == 0) neural_roi.push_back(roi_mean(neural.x, tumor_roi));
        }
    }

    // --- criterion 7: median MSE ordering at iteration 60
    double med[3][3];
    for (int mm = 0; mm < 3; ++mm)
        for (int f = 0; f < 3; ++f)
            med[mm][f] = median(mse[static_cast<std::size_t>(mm)][static_cast<std::size_t>(f)]);

    const bool low_order = med[2][0] < med[1][0] && med[1][0] < med[0][0];
    bool neural_le_kem = true;
    for (int f = 0; f < 3; ++f) neural_le_kem &= med[2][f] <= med[1][f];
    const double secs = sw.seconds();

    eo.c7.pass = low_order && neural_le_kem && secs <= kC7BudgetSeconds;
    eo.c7.detail = "median MSE dB at iter 60, low frame: neural " + fmt(med[2][0], 4) + " / kem " +
                   fmt(med[1][0], 4) + " / mlem " + fmt(med[0][0], 4) +
                   (low_order ? " (ordered)" : " (ORDER VIOLATED)") +
                   "; neural<=kem on frames [" + fmt(med[2][0], 4) + "<=" + fmt(med[1][0], 4) +
                   ", " + fmt(med[2][1], 4) + "<=" + fmt(med[1][1], 4) + ", " +
                   fmt(med[2][2], 4) + "<=" + fmt(med[1][2], 4) + "]: " +
                   (neural_le_kem ? "yes" : "NO") + "; " + fmt(secs, 1) + "s of " +
                   fmt(kC7BudgetSeconds, 1) + "s budget";

    // --- criterion 8: bias/SD of the tumor ROI on the low-count frame.
    // simulate_study derives its count scale from the noise-free data, so the
    // calibration is identical across realizations and raw ROI means compare
    // directly against the count-space truth c_true.
    double mlem_sd_min = std::numeric_limits<double>::infinity();
    double mlem_sd_60 = 0.0, mlem_bias_60 = 0.0;
    for (std::size_t c = 0; c < cp_iters.size(); ++c) {
        const auto stats = ensemble_bias_sd(mlem_roi[c], c_true);
        mlem_sd_min = std::min(mlem_sd_min, stats.sd);
        if (cp_iters[c] == 60) {
            mlem_sd_60 = stats.sd;
            mlem_bias_60 = stats.bias;
        }
    }
    const auto neural_stats = ensemble_bias_sd(neural_roi, c_true);

    const bool sd_ok = neural_stats.sd < mlem_sd_min;
    const bool bias_ok = neural_stats.bias <= 1.5 * mlem_bias_60;
    eo.c8.pass = sd_ok && bias_ok;
    eo.c8.detail = "tumor ROI, low frame: neural SD@60 " + fmt(neural_stats.sd, 4) +
                   " vs mlem min SD over iters 10..60 " + fmt(mlem_sd_min, 4) + " (SD@60 " +
                   fmt(mlem_sd_60, 4) + "): " + (sd_ok ? "lower" : "NOT lower") +
                   "; neural bias@60 " + fmt(neural_stats.bias, 4) + " vs 1.5x mlem bias@60 " +
                   fmt(1.5 * mlem_bias_60, 4) + ": " + (bias_ok ? "within" : "EXCEEDS");
    return eo;
}

// ------------------------------------------------------------ criterion 9

constexpr double kAdmmResidTol = 1e-10;
constexpr double kAdmmEmTol = 1e-3;

Outcome criterion9() {
    Rng rng(33);
    double worst_resid = 0.0;
    for (double rho : {1e-6, 0.05, 1.0, 10.0}) {
        const auto xem = random_vec(200, rng, 0.0, 3.0);
        const auto s = random_vec(200, rng, 0.2, 2.0);
        const auto t = random_vec(200, rng, -2.0, 2.0);
        const Image x = admm_image_update(Image(xem), Image(s), Image(t), rho);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double resid = rho * x[j] * x[j] + (s[j] - rho * t[j]) * x[j] - s[j] * xem[j];
            worst_resid = std::max(worst_resid, std::abs(resid));
        }
    }

    auto sc = make_small_study(32, 94);
    DipAdmmOptions opt;
    opt.outer_iters = 3;
    opt.rho = 1e-6;
    opt.recon_subiters = 4;
    opt.mse_subiters = 5;
    opt.seed = 2;
    auto admm = run_dip_admm(sc.p, ones_input(32), bypass_desc(32), sc.y, sc.r, opt);
    auto mlem = run_mlem(sc.p, sc.y, sc.r, opt.outer_iters * opt.recon_subiters);
    const double rel = rel_l2_error(admm.x.data, mlem.x.data);

    Outcome out;
    out.pass = worst_resid <= kAdmmResidTol && rel <= kAdmmEmTol;
    out.detail = "max closed-form residual " + fmt(worst_resid) + " (tol " + fmt(kAdmmResidTol) +
                 ") over 800 pixels x 4 rho values; rho=1e-6 vs pure EM rel err " + fmt(rel) +
                 " (tol " + fmt(kAdmmEmTol) + ")";
    return out;
}

// ----------------------------------------------------------- criterion 10

std::string pipeline_config_text() {
    return R"([grid]
nx = 32
ny = 32
pixel_size = 4.0

[geometry]
n_angles = 32
n_bins = 48
bin_size = 4.0

[phantom]
gray = 0 0 56 50
white = 0 -4 34 30
blood = -20 28 7 7; 20 28 7 7
tumor = 18 -18 9 9
tac_background = 0, 0
tac_gray = 2.0, 3.5
tac_white = 1.0, 1.5
tac_blood = 8.0, 3.0
tac_tumor = 2.0, 5.0

[schedule]
durations = 60, 240

[simulation]
background_fraction = 0.2
target_counts = 60000
n_realizations = 1
seed = 7

[kernel]
k = 12
sigma = 1.0
composite_ends = 300
composite_mlem_iters = 20

[network]
scales = 2
base_channels = 4

[recon.mlem]
iters = 12

[recon.kem]
iters = 12

[recon.neural-kem]
iters = 6
subiters = 20

[recon.dip-ot]
iters = 6
subiters = 20

[recon.dip-admm]
iters = 6
recon_subiters = 2
mse_subiters = 10

[eval]
iters = 6, 12
rois = tumor, gray, blood
noise_roi = white
)";
}

Outcome criterion10() {
    const Config cfg = Config::parse(pipeline_config_text());
    const ExperimentConfig x = ExperimentConfig::from_config(cfg);

    const fs::path base = fs::temp_directory_path() / "nkem_acceptance_c10";
    fs::remove_all(base);
    const fs::path dir_a = base / "run_a";
    const fs::path dir_b = base / "run_b";
    run_all(x, cfg, dir_a, {}, 1);  // every method
    run_all(x, cfg, dir_b, {}, 1);

    const auto orphans_a = orphan_files(dir_a);
    const auto orphans_b = orphan_files(dir_b);
    const auto diffs = compare_run_dirs(dir_a, dir_b);

    Outcome out;
    out.pass = orphans_a.empty() && orphans_b.empty() && diffs.empty();
    out.detail = "all 5 methods, 2 frames, full stage chain run twice: " +
                 std::to_string(diffs.size()) + " differences, " +
                 std::to_string(orphans_a.size() + orphans_b.size()) + " orphan files";
    if (!diffs.empty()) out.detail += "; first diff: " + diffs.front();
    fs::remove_all(base);
    return out;
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };

    EnsembleOutcome ensemble;  // criteria 7 and 8 share one run
    bool ensemble_done = false;
    auto ensure_ensemble = [&]() {
        if (!ensemble_done) {
            ensemble = criteria7and8();
            ensemble_done = true;
        }
    };

    const std::vector<Entry> entries = {
        {1, "reduction identities (KEM->MLEM, neural->KEM)", criterion1},
        {2, "EM/KEM log-likelihood monotonicity", criterion2},
        {3, "guarded neural-KEM likelihood monotonicity", criterion3},
        {4, "surrogate minorization and tangency", criterion4},
        {5, "KEM count preservation at r=0", criterion5},
        {6, "finite-difference gradient suite", criterion6},
        {7, "low-count MSE trend: neural KEM < KEM < MLEM",
         [&]() {
             ensure_ensemble();
             return ensemble.c7;
         }},
        {8, "bias-SD trend: neural KEM beats the MLEM noise curve",
         [&]() {
             ensure_ensemble();
             return ensemble.c8;
         }},
        {9, "ADMM closed form and vanishing-rho limit", criterion9},
        {10, "byte-identical pipeline re-run", criterion10},
    };

    int failures = 0;
    for (const Entry& e : entries) {
        Outcome out;
        try {
            out = e.fn();
        } catch (const std::exception& ex) {
            out.pass = false;
            out.detail = std::string("exception: ") + ex.what();
        }
        if (!out.pass) ++failures;
        std::printf("%s criterion %d: %s — %s\n", out.pass ? "PASS" : "FAIL", e.id, e.name,
                    out.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
