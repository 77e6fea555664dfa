#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nkem/phantom.hpp"
#include "nkem/sparse.hpp"
#include "nkem/types.hpp"

namespace nkem {

/// One complete noisy dynamic scan. noisefree_sinos holds the Poisson means
/// ybar = scale * duration * P x_true + r; noisy_sinos holds integer counts;
/// background_sinos holds the uniform scatter+randoms term r.
struct DynamicStudy {
    Grid grid;
    ProjGeometry geom;
    FramingSchedule schedule;
    std::vector<Image> true_images;
    std::vector<Sinogram> noisefree_sinos;
    std::vector<Sinogram> noisy_sinos;
    std::vector<Sinogram> background_sinos;
    std::uint64_t seed = 0;
    double scale = 1.0;  // global count calibration factor

    int n_frames() const { return schedule.n_frames(); }
    void validate() const;
};

/// Element-wise Poisson draw from the given mean sinogram, using one
/// sequentially-consumed generator seeded as stated.
Sinogram poisson_sample(const Sinogram& ybar, std::uint64_t seed);

struct CountFrame {
    Sinogram noisy;
    Sinogram background;
    double scale = 1.0;
};

/// Simulates one frame. trues = scale * duration_s * P x_true where scale is
/// chosen so the frame's expected total is target_total_counts (pass
/// target_total_counts = 0 to skip calibration and use scale = 1). The
/// background r is uniform with sum background_fraction * sum(ybar). Errors
/// if a positive target is requested but the expected sinogram would be all
/// zero.
CountFrame simulate_counts(const SparseMatrix& p, const Image& x_true, double duration_s,
                           double background_fraction, double target_total_counts,
                           std::uint64_t seed);

/// Same, with the calibration factor supplied directly (used per frame when
/// the scale has been fixed at study level).
CountFrame simulate_counts_scaled(const SparseMatrix& p, const Image& x_true, double duration_s,
                                  double background_fraction, double scale, std::uint64_t seed);

/// Simulates the full dynamic study with one global scale so the expected
/// total over all frames equals target_total_counts. Frame m draws from an
/// independent generator seeded with derive_seed(seed, m).
DynamicStudy simulate_study(const SparseMatrix& p, const Grid& grid, const ProjGeometry& geom,
                            const std::vector<Image>& true_images,
                            const FramingSchedule& schedule, double background_fraction,
                            double target_total_counts, std::uint64_t seed);

/// Time windows for composite (prior) frames, given as ascending end times
/// in seconds; windows start where the previous one ends, the first at 0.
/// Every end time must coincide with a frame boundary of the schedule and
/// the last must equal the total scan duration.
struct CompositeBins {
    std::vector<Sinogram> sinos;        // one rebinned sinogram per window
    std::vector<Sinogram> backgrounds;  // matching summed background terms
    std::vector<double> durations_s;
};

/// Maps window end times to frame index ranges; throws on misaligned or
/// non-partitioning windows.
std::vector<std::pair<int, int>> window_frame_ranges(const FramingSchedule& schedule,
                                                     const std::vector<double>& window_ends_s);

/// Sums frame sinograms (noisy counts by default, Poisson means when
/// use_noisy is false) into composite bins.
CompositeBins rebin_composites(const DynamicStudy& study,
                               const std::vector<double>& window_ends_s, bool use_noisy = true);

// Directory persistence: per-frame raw f64 arrays plus a structured-text
// manifest (dims, schedule, seed, scale). Round-trips bit-exactly.
void save_study(const std::filesystem::path& dir, const DynamicStudy& study);
DynamicStudy load_study(const std::filesystem::path& dir);

}  // namespace nkem
