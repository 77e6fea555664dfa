#include "nkem/simulate.hpp"

#include <cmath>
#include <cstdio>

#include "nkem/io.hpp"
#include "nkem/projector.hpp"
#include "nkem/rng.hpp"

namespace nkem {

void DynamicStudy::validate() const {
    const int m = n_frames();
    require(m > 0, "DynamicStudy: empty schedule");
    require(static_cast<int>(true_images.size()) == m &&
                static_cast<int>(noisefree_sinos.size()) == m &&
                static_cast<int>(noisy_sinos.size()) == m &&
                static_cast<int>(background_sinos.size()) == m,
            "DynamicStudy: frame array count mismatch");
    const std::size_t j = grid.num_pixels();
    const std::size_t n = geom.num_rays();
    for (int f = 0; f < m; ++f) {
        require(true_images[f].size() == j, "DynamicStudy: image length mismatch");
        require(noisefree_sinos[f].size() == n && noisy_sinos[f].size() == n &&
                    background_sinos[f].size() == n,
                "DynamicStudy: sinogram length mismatch");
        for (double v : noisy_sinos[f].data) {
            require(v >= 0.0 && v == std::floor(v), "DynamicStudy: noisy counts must be integers");
        }
    }
}

Sinogram poisson_sample(const Sinogram& ybar, std::uint64_t seed) {
    Rng rng(seed);
    Sinogram out(ybar.size());
    for (std::size_t i = 0; i < ybar.size(); ++i) {
        require(std::isfinite(ybar[i]) && ybar[i] >= 0.0,
                "poisson_sample: means must be finite and >= 0");
        out[i] = static_cast<double>(rng.poisson(ybar[i]));
    }
    return out;
}

CountFrame simulate_counts_scaled(const SparseMatrix& p, const Image& x_true, double duration_s,
                                  double background_fraction, double scale, std::uint64_t seed) {
    require(duration_s > 0.0, "simulate_counts: duration must be > 0");
    require(background_fraction >= 0.0 && background_fraction < 1.0,
            "simulate_counts: background_fraction must be in [0,1)");
    require(scale >= 0.0, "simulate_counts: scale must be >= 0");
    Sinogram trues = forward_project(p, x_true);
    double total_trues = 0.0;
    for (double& v : trues.data) {
        v *= scale * duration_s;
        total_trues += v;
    }
    // sum r = bf * sum ybar and sum ybar = total_trues + sum r together give
    // sum r = bf/(1-bf) * total_trues.
    const double r_total = background_fraction / (1.0 - background_fraction) * total_trues;
    const double r_each = r_total / static_cast<double>(trues.size());
    Sinogram ybar = trues;
    for (double& v : ybar.data) v += r_each;
    CountFrame out;
    out.noisy = poisson_sample(ybar, seed);
    out.background = Sinogram(trues.size(), r_each);
    out.scale = scale;
    return out;
}

CountFrame simulate_counts(const SparseMatrix& p, const Image& x_true, double duration_s,
                           double background_fraction, double target_total_counts,
                           std::uint64_t seed) {
    require(target_total_counts >= 0.0, "simulate_counts: target must be >= 0");
    const Sinogram trues = forward_project(p, x_true);
    const double total = duration_s * sum(trues.data);
    double scale = 1.0;
    if (target_total_counts > 0.0) {
        require(total > 0.0, "simulate_counts: expected sinogram is all zero");
        scale = (1.0 - background_fraction) * target_total_counts / total;
    }
    return simulate_counts_scaled(p, x_true, duration_s, background_fraction, scale, seed);
}

DynamicStudy simulate_study(const SparseMatrix& p, const Grid& grid, const ProjGeometry& geom,
                            const std::vector<Image>& true_images,
                            const FramingSchedule& schedule, double background_fraction,
                            double target_total_counts, std::uint64_t seed) {
    require(static_cast<int>(true_images.size()) == schedule.n_frames(),
            "simulate_study: frame count mismatch");
    require(target_total_counts >= 0.0, "simulate_study: target must be >= 0");

    double total = 0.0;
    for (int m = 0; m < schedule.n_frames(); ++m) {
        const Sinogram t = forward_project(p, true_images[m]);
        total += schedule.durations_s[m] * sum(t.data);
    }
    double scale = 1.0;
    if (target_total_counts > 0.0) {
        require(total > 0.0, "simulate_study: expected study counts are all zero");
        scale = (1.0 - background_fraction) * target_total_counts / total;
    }

    DynamicStudy study;
    study.grid = grid;
    study.geom = geom;
    study.schedule = schedule;
    study.seed = seed;
    study.scale = scale;
    study.true_images = true_images;
    for (int m = 0; m < schedule.n_frames(); ++m) {
        CountFrame f = simulate_counts_scaled(p, true_images[m], schedule.durations_s[m],
                                              background_fraction, scale, derive_seed(seed, m));
        Sinogram ybar = forward_project(p, true_images[m]);
        for (std::size_t i = 0; i < ybar.size(); ++i) {
            ybar[i] = ybar[i] * scale * schedule.durations_s[m] + f.background[i];
        }
        study.noisefree_sinos.push_back(std::move(ybar));
        study.noisy_sinos.push_back(std::move(f.noisy));
        study.background_sinos.push_back(std::move(f.background));
    }
    study.validate();
    return study;
}

std::vector<std::pair<int, int>> window_frame_ranges(const FramingSchedule& schedule,
                                                     const std::vector<double>& window_ends_s) {
    require(!window_ends_s.empty(), "composite windows: none given");
    const double total = schedule.total_duration();
    std::vector<std::pair<int, int>> ranges;
    int frame = 0;
    double prev_end = 0.0;
    for (double end : window_ends_s) {
        require(end > prev_end, "composite windows: end times must be ascending");
        const int first = frame;
        double t = prev_end;
        while (frame < schedule.n_frames() && t + schedule.durations_s[frame] <= end + 1e-9 * total) {
            t += schedule.durations_s[frame];
            ++frame;
        }
        require(std::abs(t - end) <= 1e-9 * total,
                "composite windows: end time not aligned to a frame boundary");
        require(frame > first, "composite windows: empty window");
        ranges.emplace_back(first, frame);
        prev_end = end;
    }
    require(frame == schedule.n_frames(),
            "composite windows: windows must cover the whole scan");
    return ranges;
}

CompositeBins rebin_composites(const DynamicStudy& study,
                               const std::vector<double>& window_ends_s, bool use_noisy) {
    const auto ranges = window_frame_ranges(study.schedule, window_ends_s);
    const std::size_t n = study.geom.num_rays();
    CompositeBins bins;
    for (const auto& [first, last] : ranges) {
        Sinogram acc(n, 0.0);
        Sinogram bg(n, 0.0);
        double dur = 0.0;
        for (int m = first; m < last; ++m) {
            const Sinogram& src = use_noisy ? study.noisy_sinos[m] : study.noisefree_sinos[m];
            for (std::size_t i = 0; i < n; ++i) {
                acc[i] += src[i];
                bg[i] += study.background_sinos[m][i];
            }
            dur += study.schedule.durations_s[m];
        }
        bins.sinos.push_back(std::move(acc));
        bins.backgrounds.push_back(std::move(bg));
        bins.durations_s.push_back(dur);
    }
    return bins;
}

namespace {

std::string frame_file(const char* stem, int m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d.f64", stem, m);
    return buf;
}

}  // namespace

void save_study(const std::filesystem::path& dir, const DynamicStudy& study) {
    study.validate();
    std::filesystem::create_directories(dir);
    KvFile kv;
    kv.set("kind", "dynamic_study");
    kv.set_i64("nx", study.grid.nx);
    kv.set_i64("ny", study.grid.ny);
    kv.set_i64("nz", study.grid.nz);
    kv.set_f64("pixel_size", study.grid.pixel_size);
    kv.set_i64("n_angles", study.geom.n_angles);
    kv.set_i64("n_bins", study.geom.n_bins);
    kv.set_f64("bin_size", study.geom.bin_size);
    kv.set_i64("n_axial", study.geom.n_axial);
    kv.set_i64("n_frames", study.n_frames());
    kv.set_u64("seed", study.seed);
    kv.set_f64("scale", study.scale);
    for (int m = 0; m < study.n_frames(); ++m) {
        kv.set_f64("duration_" + std::to_string(m), study.schedule.durations_s[m]);
    }
    kv.save(dir / "study.manifest");
    for (int m = 0; m < study.n_frames(); ++m) {
        write_raw_f64(dir / frame_file("true", m), study.true_images[m].data);
        write_raw_f64(dir / frame_file("noisefree", m), study.noisefree_sinos[m].data);
        write_raw_f64(dir / frame_file("noisy", m), study.noisy_sinos[m].data);
        write_raw_f64(dir / frame_file("background", m), study.background_sinos[m].data);
    }
}

DynamicStudy load_study(const std::filesystem::path& dir) {
    const KvFile kv = KvFile::load(dir / "study.manifest");
    require(kv.get("kind") == "dynamic_study", "load_study: not a study directory");
    DynamicStudy study;
    study.grid = Grid(static_cast<int>(kv.get_i64("nx")), static_cast<int>(kv.get_i64("ny")),
                      kv.get_f64("pixel_size"), static_cast<int>(kv.get_i64("nz")));
    study.geom = ProjGeometry(static_cast<int>(kv.get_i64("n_angles")),
                              static_cast<int>(kv.get_i64("n_bins")), kv.get_f64("bin_size"),
                              static_cast<int>(kv.get_i64("n_axial")));
    const int n_frames = static_cast<int>(kv.get_i64("n_frames"));
    study.seed = kv.get_u64("seed");
    study.scale = kv.get_f64("scale");
    std::vector<double> durations;
    for (int m = 0; m < n_frames; ++m) {
        durations.push_back(kv.get_f64("duration_" + std::to_string(m)));
    }
    study.schedule = FramingSchedule(std::move(durations));
    const std::size_t j = study.grid.num_pixels();
    const std::size_t n = study.geom.num_rays();
    for (int m = 0; m < n_frames; ++m) {
        study.true_images.emplace_back(read_raw_f64(dir / frame_file("true", m), j));
        study.noisefree_sinos.emplace_back(read_raw_f64(dir / frame_file("noisefree", m), n));
        study.noisy_sinos.emplace_back(read_raw_f64(dir / frame_file("noisy", m), n));
        study.background_sinos.emplace_back(read_raw_f64(dir / frame_file("background", m), n));
    }
    study.validate();
    return study;
}

}  // namespace nkem
