#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nkem/config.hpp"
#include "nkem/phantom.hpp"
#include "nkem/types.hpp"

namespace nkem {

/// [kernel] section: kNN Gaussian kernel built from composite-frame
/// features, plus how the composites themselves are formed.
struct KernelConfig {
    int k = 48;
    double sigma = 1.0;
    int window = 0;  // 0 = search the whole image
    bool row_normalize = false;
    std::vector<double> composite_ends_s;  // ascending window end times
    int composite_mlem_iters = 60;
    bool composite_from_noisy = true;  // false: rebin Poisson means instead
};

/// [network] section: U-net architecture shared by the neural methods.
struct NetworkConfig {
    int scales = 3;
    int base_channels = 16;
};

struct MlemConfig {
    int iters = 60;
};

struct KemConfig {
    int iters = 60;
};

struct NeuralKemConfig {
    int iters = 60;
    int subiters = 150;
    double lr = 1e-3;
    int guard_retries = 3;
};

struct DipOtConfig {
    int iters = 60;
    int subiters = 150;
    double lr = 1e-3;
};

struct DipAdmmConfig {
    int iters = 60;
    double rho = 0.05;
    int recon_subiters = 4;
    int mse_subiters = 50;
    double lr = 1e-3;
};

/// [eval] section: which iterations are checkpointed/evaluated and which
/// phantom regions serve as ROI and background-noise masks.
struct EvalConfig {
    std::vector<int> iters{10, 20, 30, 40, 50, 60};
    std::vector<Region> rois{kBlood, kTumor};
    Region noise_roi = kWhite;
};

/// Fully-typed experiment description. Every field has the stated default;
/// from_config overrides from the document and rejects unknown sections or
/// keys so that typos fail loudly instead of silently running defaults.
struct ExperimentConfig {
    Grid grid;
    ProjGeometry geom;
    PhantomSpec phantom;
    TacTable tacs;
    FramingSchedule schedule;

    // [simulation]
    double background_fraction = 0.2;
    double target_counts = 5e5;
    int n_realizations = 1;
    std::uint64_t seed = 1;

    KernelConfig kernel;
    NetworkConfig network;
    MlemConfig mlem;
    KemConfig kem;
    NeuralKemConfig neural_kem;
    DipOtConfig dip_ot;
    DipAdmmConfig dip_admm;
    EvalConfig eval;

    static ExperimentConfig from_config(const Config& cfg);

    /// Cross-field checks (positivity, TAC shape vs schedule, composite
    /// windows vs schedule). from_config calls this; throws on violation.
    void validate() const;

    /// Iterations at which recon stages write image checkpoints: the eval
    /// list filtered to [1, iters], always including the final iteration.
    std::vector<int> checkpoint_iters(int method_iters) const;
};

/// Region named in config files ("background", "gray", "white", "blood",
/// "tumor") to enum; throws on anything else.
Region region_from_name(const std::string& name);

/// Ellipse lists in config: entries separated by ';', each entry
/// whitespace-separated numbers "cx cy rx ry" (2D) or "cx cy cz rx ry rz"
/// (3D), in mm. Empty string yields an empty list.
std::vector<Ellipse> parse_ellipses(const std::string& text, bool three_d);

}  // namespace nkem
