#include "nkem/recon.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "nkem/io.hpp"
#include "nkem/projector.hpp"
#include "nkem/trainer.hpp"

namespace nkem {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// y / ybar with the 0/0 := 0 convention; y > 0 over an empty bin throws.
Sinogram likelihood_ratio(const Sinogram& y, const Sinogram& ybar) {
    require(y.size() == ybar.size(), "ratio: dimension mismatch");
    Sinogram q(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        require(ybar[i] >= 0.0 && std::isfinite(ybar[i]), "ratio: invalid expectation");
        if (ybar[i] == 0.0) {
            require(y[i] == 0.0, "ratio: observed counts in a bin with zero expectation");
            continue;
        }
        q[i] = y[i] / ybar[i];
    }
    return q;
}

Sinogram add_background(Sinogram ybar, const Sinogram& r) {
    require(r.size() == 0 || r.size() == ybar.size(), "background: dimension mismatch");
    for (std::size_t i = 0; i < r.size(); ++i) ybar[i] += r[i];
    return ybar;
}

Image masked_uniform_init(const Image& weight) {
    Image x(weight.size(), 0.0);
    for (std::size_t j = 0; j < weight.size(); ++j) x[j] = weight[j] > 0.0 ? 1.0 : 0.0;
    return x;
}

Image apply_mask(const Image& v, const Image& weight) {
    Image out(v.size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) out[j] = weight[j] > 0.0 ? v[j] : 0.0;
    return out;
}

}  // namespace

double log_likelihood(const Sinogram& y, const Sinogram& ybar) {
    require(y.size() == ybar.size(), "log_likelihood: dimension mismatch");
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        require(y[i] >= 0.0 && std::isfinite(y[i]), "log_likelihood: invalid counts");
        require(ybar[i] >= 0.0 && std::isfinite(ybar[i]), "log_likelihood: invalid expectation");
        if (ybar[i] == 0.0) {
            require(y[i] == 0.0, "log_likelihood: observed counts with zero expectation");
            continue;  // 0 log 0 - 0 = 0
        }
        ll += y[i] * std::log(ybar[i]) - ybar[i];
    }
    return ll;
}

Image em_step(const SparseMatrix& p, const Sinogram& y, const Sinogram& r, const Image& x,
              const Image& s) {
    require(x.size() == p.n_cols && s.size() == p.n_cols, "em_step: image size mismatch");
    const Sinogram ybar = add_background(forward_project(p, x), r);
    const Image bp = back_project(p, likelihood_ratio(y, ybar));
    Image next(x.size(), 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (s[j] > 0.0) next[j] = x[j] / s[j] * bp[j];
    }
    return next;
}

Image kem_step(const SparseMatrix& p, const KernelModel& k, const Sinogram& y, const Sinogram& r,
               const Image& alpha, const Image& w) {
    require(alpha.size() == p.n_cols && w.size() == p.n_cols, "kem_step: image size mismatch");
    const Sinogram ybar = add_background(forward_project(p, apply_K(k, alpha)), r);
    const Image bp = apply_Kt(k, back_project(p, likelihood_ratio(y, ybar)));
    Image next(alpha.size(), 0.0);
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        if (w[j] > 0.0) next[j] = alpha[j] / w[j] * bp[j];
    }
    return next;
}

ReconResult run_mlem(const SparseMatrix& p, const Sinogram& y, const Sinogram& r, int iters,
                     const Image* init, const IterCallback& cb) {
    require(iters >= 1, "run_mlem: iters must be >= 1");
    const Image s = sensitivity(p);
    ReconResult res;
    res.x = init != nullptr ? apply_mask(*init, s) : masked_uniform_init(s);
    for (int n = 1; n <= iters; ++n) {
        const auto t0 = Clock::now();
        res.x = em_step(p, y, r, res.x, s);
        IterRecord rec;
        rec.iter = n;
        rec.loglik = log_likelihood(y, add_background(forward_project(p, res.x), r));
        rec.wall_ms = elapsed_ms(t0);
        res.trace.push_back(rec);
        if (cb) cb(n, res.x);
    }
    res.alpha = res.x;
    return res;
}

ReconResult run_kem(const SparseMatrix& p, const KernelModel& k, const Sinogram& y,
                    const Sinogram& r, int iters, const Image* init, const IterCallback& cb) {
    require(iters >= 1, "run_kem: iters must be >= 1");
    require(k.k_mat.n_rows == p.n_cols && k.k_mat.n_cols == p.n_cols,
            "run_kem: kernel size mismatch");
    const Image s = sensitivity(p);
    const Image w = combined_weight(k, s);
    ReconResult res;
    res.alpha = init != nullptr ? apply_mask(*init, w) : masked_uniform_init(w);
    for (int n = 1; n <= iters; ++n) {
        const auto t0 = Clock::now();
        res.alpha = kem_step(p, k, y, r, res.alpha, w);
        res.x = apply_K(k, res.alpha);
        IterRecord rec;
        rec.iter = n;
        rec.loglik = log_likelihood(y, add_background(forward_project(p, res.x), r));
        rec.wall_ms = elapsed_ms(t0);
        res.trace.push_back(rec);
        if (cb) cb(n, res.x);
    }
    return res;
}

ReconResult run_neural_kem(const SparseMatrix& p, const KernelModel& k, const Tensor& z,
                           const UNetDescriptor& desc, const Sinogram& y, const Sinogram& r,
                           const NeuralKemOptions& opt, const IterCallback& cb) {
    require(opt.outer_iters >= 1 && opt.subiters >= 1, "run_neural_kem: iteration counts");
    require(k.k_mat.n_rows == p.n_cols && k.k_mat.n_cols == p.n_cols,
            "run_neural_kem: kernel size mismatch");
    const Image s = sensitivity(p);
    const Image w = combined_weight(k, s);

    UNet net(desc);
    ReconResult res;
    res.params = init_params(desc, opt.seed);
    Image beta = output_to_image(net.forward(res.params, z));
    require(beta.size() == p.n_cols, "run_neural_kem: network output size mismatch");

    for (int n = 1; n <= opt.outer_iters; ++n) {
        const auto t0 = Clock::now();
        const Image alpha = apply_mask(beta, w);
        const Image alpha_hat = kem_step(p, k, y, r, alpha, w);

        IterRecord rec;
        rec.iter = n;
        rec.q_before = loss_q(alpha_hat, beta, w).value;
        const double eps_q = 1e-9 * std::abs(rec.q_before);

        // Retrain with doubled subiters until the surrogate is not worse
        // than its pre-update value; keep the best attempt.
        NetParams accepted;
        Image accepted_beta;
        double best_q = -std::numeric_limits<double>::infinity();
        bool ok = false;
        int retries = 0;
        for (int attempt = 0; attempt <= opt.guard_max_retries; ++attempt) {
            NetParams candidate = res.params;
            AdamState adam = AdamState::create(candidate, opt.lr);
            TrainResult tr = train_to_target(net, candidate, adam, z, alpha_hat, w, LossKind::kQ,
                                             opt.subiters << attempt);
            if (tr.best > best_q) {
                best_q = tr.best;
                accepted = std::move(candidate);
                accepted_beta = std::move(tr.best_beta);
            }
            retries = attempt;
            if (best_q >= rec.q_before - eps_q) {
                ok = true;
                break;
            }
        }
        rec.guard_retries = retries;
        if (ok) {
            res.params = std::move(accepted);
            beta = std::move(accepted_beta);
            rec.q_after = best_q;
        } else {
            rec.guard_rejected = true;
            rec.q_after = rec.q_before;  // theta kept
        }

        res.alpha = apply_mask(beta, w);
        res.x = apply_K(k, res.alpha);
        rec.loglik = log_likelihood(y, add_background(forward_project(p, res.x), r));
        rec.wall_ms = elapsed_ms(t0);
        res.trace.push_back(rec);
        if (cb) cb(n, res.x);
    }
    return res;
}

ReconResult run_dip_ot(const SparseMatrix& p, const Tensor& z, const UNetDescriptor& desc,
                       const Sinogram& y, const Sinogram& r, const NeuralKemOptions& opt,
                       const IterCallback& cb) {
    return run_neural_kem(p, KernelModel::identity(p.n_cols), z, desc, y, r, opt, cb);
}

Image admm_image_update(const Image& xem, const Image& s, const Image& t, double rho) {
    require(rho > 0.0, "admm_image_update: rho must be > 0");
    const std::size_t n = xem.size();
    require(s.size() == n && t.size() == n, "admm_image_update: dimension mismatch");
    Image x(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (s[j] <= 0.0) continue;  // off-support pixels stay 0
        const double b = s[j] - rho * t[j];
        const double c = s[j] * xem[j];
        const double disc = std::sqrt(b * b + 4.0 * rho * c);
        // Positive root of rho x^2 + b x - c = 0 without cancellation.
        x[j] = b > 0.0 ? 2.0 * c / (b + disc) : (disc - b) / (2.0 * rho);
    }
    return x;
}

ReconResult run_dip_admm(const SparseMatrix& p, const Tensor& z, const UNetDescriptor& desc,
                         const Sinogram& y, const Sinogram& r, const DipAdmmOptions& opt,
                         const IterCallback& cb) {
    require(opt.outer_iters >= 1, "run_dip_admm: outer_iters must be >= 1");
    require(opt.rho > 0.0, "run_dip_admm: rho must be > 0");
    require(opt.recon_subiters >= 1 && opt.mse_subiters >= 1, "run_dip_admm: subiter counts");
    const Image s = sensitivity(p);

    UNet net(desc);
    ReconResult res;
    res.params = init_params(desc, opt.seed);
    Image beta = output_to_image(net.forward(res.params, z));
    require(beta.size() == p.n_cols, "run_dip_admm: network output size mismatch");

    Image mu(p.n_cols, 0.0);
    res.x = masked_uniform_init(s);
    Image dummy_w(p.n_cols, 0.0);

    for (int n = 1; n <= opt.outer_iters; ++n) {
        const auto t0 = Clock::now();
        // (1) penalized-likelihood image update, EM surrogate + quadratic term
        Image t(p.n_cols, 0.0);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = beta[j] - mu[j];
        for (int i = 0; i < opt.recon_subiters; ++i) {
            const Image xem = em_step(p, y, r, res.x, s);
            res.x = admm_image_update(xem, s, t, opt.rho);
        }
        // (2) network MSE fit to x + mu
        Image target(p.n_cols, 0.0);
        for (std::size_t j = 0; j < target.size(); ++j) target[j] = res.x[j] + mu[j];
        AdamState adam = AdamState::create(res.params, opt.lr);
        TrainResult tr = train_to_target(net, res.params, adam, z, target, dummy_w,
                                         LossKind::kMse, opt.mse_subiters);
        beta = std::move(tr.best_beta);
        // (3) multiplier update
        for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += res.x[j] - beta[j];

        IterRecord rec;
        rec.iter = n;
        rec.loglik = log_likelihood(y, add_background(forward_project(p, res.x), r));
        rec.wall_ms = elapsed_ms(t0);
        res.trace.push_back(rec);
        if (cb) cb(n, res.x);
    }
    res.alpha = res.x;
    return res;
}

double surrogate_q_exact(const Image& alpha_hat, const Image& beta, const Image& w) {
    const std::size_t n = beta.size();
    require(alpha_hat.size() == n && w.size() == n, "surrogate_q_exact: dimension mismatch");
    double q = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (w[j] == 0.0) continue;
        require(beta[j] > 0.0, "surrogate_q_exact: beta must be > 0 on weighted pixels");
        q += w[j] * (alpha_hat[j] * std::log(beta[j]) - beta[j]);
    }
    return q;
}

SurrogateGaps check_surrogate(const SparseMatrix& p, const KernelModel& k, const Sinogram& y,
                              const Sinogram& r, const UNetDescriptor& desc,
                              const NetParams& theta_n, const NetParams& theta,
                              const Tensor& z) {
    const Image s = sensitivity(p);
    const Image w = combined_weight(k, s);
    UNet net(desc);

    const Image beta_n = output_to_image(net.forward(theta_n, z));
    const Image alpha_n = apply_mask(beta_n, w);
    const Image alpha_hat = kem_step(p, k, y, r, alpha_n, w);
    const double q_base = surrogate_q_exact(alpha_hat, beta_n, w);
    const double l_base =
        log_likelihood(y, add_background(forward_project(p, apply_K(k, alpha_n)), r));

    const Image beta = output_to_image(net.forward(theta, z));
    const Image alpha = apply_mask(beta, w);
    const double q_alt = surrogate_q_exact(alpha_hat, beta, w);
    const double l_alt =
        log_likelihood(y, add_background(forward_project(p, apply_K(k, alpha)), r));

    return SurrogateGaps{q_alt - q_base, l_alt - l_base};
}

std::vector<Image> composite_frames(const DynamicStudy& study,
                                    const std::vector<double>& window_ends_s,
                                    const SparseMatrix& p, int mlem_iters, bool use_noisy) {
    const CompositeBins bins = rebin_composites(study, window_ends_s, use_noisy);
    std::vector<Image> out;
    out.reserve(bins.sinos.size());
    for (std::size_t c = 0; c < bins.sinos.size(); ++c) {
        out.push_back(run_mlem(p, bins.sinos[c], bins.backgrounds[c], mlem_iters).x);
    }
    return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<IterRecord>& trace) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), "write_trace_csv: cannot open " + path.string());
    out << "iter,loglik,Q_before,Q_after,guard_retries,wall_ms\n";
    for (const IterRecord& r : trace) {
        out << r.iter << ',' << format_f64(r.loglik) << ','
            << (std::isnan(r.q_before) ? "nan" : format_f64(r.q_before)) << ','
            << (std::isnan(r.q_after) ? "nan" : format_f64(r.q_after)) << ',' << r.guard_retries
            << ',' << format_f64(r.wall_ms) << '\n';
    }
    require(out.good(), "write_trace_csv: write failed");
}

}  // namespace nkem
