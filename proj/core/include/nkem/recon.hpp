#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

#include "nkem/kernel.hpp"
#include "nkem/simulate.hpp"
#include "nkem/sparse.hpp"
#include "nkem/types.hpp"
#include "nkem/unet.hpp"

namespace nkem {

/// Poisson log-likelihood sum_i y_i log(ybar_i) - ybar_i with the log y!
/// constant dropped and 0 log 0 = 0. A bin with y > 0 but ybar = 0 is a
/// model inconsistency and throws.
double log_likelihood(const Sinogram& y, const Sinogram& ybar);

/// One ML-EM update x <- (x/s) P^T(y / (Px + r)); pixels with s = 0 are
/// held at zero.
Image em_step(const SparseMatrix& p, const Sinogram& y, const Sinogram& r, const Image& x,
              const Image& s);

/// One coefficient-space KEM update alpha <- (alpha/w) K^T P^T(y/(PK alpha + r)).
Image kem_step(const SparseMatrix& p, const KernelModel& k, const Sinogram& y, const Sinogram& r,
               const Image& alpha, const Image& w);

struct IterRecord {
    int iter = 0;  // 1-based outer iteration
    double loglik = 0.0;
    double q_before = std::numeric_limits<double>::quiet_NaN();
    double q_after = std::numeric_limits<double>::quiet_NaN();
    int guard_retries = 0;
    bool guard_rejected = false;
    double wall_ms = 0.0;
};

struct ReconResult {
    Image x;      // final activity image (K alpha for kernel methods)
    Image alpha;  // final coefficients (equals x when K = I)
    std::vector<IterRecord> trace;
    NetParams params;  // final network state; empty for mlem/kem
};

/// Observer invoked after each outer iteration with the current image.
using IterCallback = std::function<void(int iter, const Image& x)>;

ReconResult run_mlem(const SparseMatrix& p, const Sinogram& y, const Sinogram& r, int iters,
                     const Image* init = nullptr, const IterCallback& cb = nullptr);

ReconResult run_kem(const SparseMatrix& p, const KernelModel& k, const Sinogram& y,
                    const Sinogram& r, int iters, const Image* init = nullptr,
                    const IterCallback& cb = nullptr);

struct NeuralKemOptions {
    int outer_iters = 60;
    int subiters = 150;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    int guard_max_retries = 3;  // retrains with doubled subiters
};

/// Alternates a KEM coefficient update with network learning that maximizes
/// the weighted-Poisson surrogate, guarded so the accepted surrogate value
/// never drops below its pre-update value (within 1e-9 relative), which in
/// turn keeps the likelihood trace nondecreasing.
ReconResult run_neural_kem(const SparseMatrix& p, const KernelModel& k, const Tensor& z,
                           const UNetDescriptor& desc, const Sinogram& y, const Sinogram& r,
                           const NeuralKemOptions& opt, const IterCallback& cb = nullptr);

/// Neural KEM with K = I (network output is the image itself).
ReconResult run_dip_ot(const SparseMatrix& p, const Tensor& z, const UNetDescriptor& desc,
                       const Sinogram& y, const Sinogram& r, const NeuralKemOptions& opt,
                       const IterCallback& cb = nullptr);

struct DipAdmmOptions {
    int outer_iters = 60;
    double rho = 0.05;
    int recon_subiters = 4;  // penalized-EM steps per outer iteration
    int mse_subiters = 50;   // network MSE fitting steps per outer iteration
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

/// ADMM splitting of the penalized-likelihood problem: penalized-EM image
/// updates with the closed-form quadratic root, network MSE fitting to
/// x + mu, and a multiplier update mu += x - beta.
ReconResult run_dip_admm(const SparseMatrix& p, const Tensor& z, const UNetDescriptor& desc,
                         const Sinogram& y, const Sinogram& r, const DipAdmmOptions& opt,
                         const IterCallback& cb = nullptr);

/// Solves rho x^2 + (s - rho t) x - s xem = 0 for the nonnegative root,
/// elementwise; the penalized-EM closed form (cancellation-safe branch).
Image admm_image_update(const Image& xem, const Image& s, const Image& t, double rho);

/// Exact-log surrogate sum_{w>0} w_j (alpha_hat_j log beta_j - beta_j);
/// requires beta > 0 wherever w > 0 (no floor — used by the minorization
/// checks, where the floor would break the inequality).
double surrogate_q_exact(const Image& alpha_hat, const Image& beta, const Image& w);

struct SurrogateGaps {
    double q_gap = 0.0;
    double l_gap = 0.0;
};

/// Evaluates Q(theta|theta_n) - Q(theta_n|theta_n) and the matching
/// likelihood gap, with alpha_hat the KEM update of beta(theta_n|z).
/// Minorization guarantees q_gap <= l_gap for any theta.
SurrogateGaps check_surrogate(const SparseMatrix& p, const KernelModel& k, const Sinogram& y,
                              const Sinogram& r, const UNetDescriptor& desc,
                              const NetParams& theta_n, const NetParams& theta,
                              const Tensor& z);

/// Composite prior images: rebinned window sinograms reconstructed by
/// ML-EM (use_noisy selects counts vs Poisson means as the source).
std::vector<Image> composite_frames(const DynamicStudy& study,
                                    const std::vector<double>& window_ends_s,
                                    const SparseMatrix& p, int mlem_iters = 60,
                                    bool use_noisy = true);

/// CSV trace: iter,loglik,Q_before,Q_after,guard_retries,wall_ms ("nan"
/// where a column does not apply to the method).
void write_trace_csv(const std::filesystem::path& path, const std::vector<IterRecord>& trace);

}  // namespace nkem
