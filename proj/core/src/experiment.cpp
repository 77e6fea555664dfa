#include "nkem/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nkem/io.hpp"

namespace nkem {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("experiment: " + msg); }

void check(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

/// Wraps Config access while recording which keys were consumed, so that
/// from_config can reject anything left over.
class Reader {
  public:
    explicit Reader(const Config& cfg) : cfg_(cfg) {}

    void allow_section(const std::string& s) { known_sections_.insert(s); }

    bool has(const std::string& s, const std::string& k) {
        touch(s, k);
        return cfg_.has(s, k);
    }
    std::string str(const std::string& s, const std::string& k) {
        touch(s, k);
        return cfg_.get_str(s, k);
    }
    std::string str_or(const std::string& s, const std::string& k, const std::string& d) {
        touch(s, k);
        return cfg_.get_str_or(s, k, d);
    }
    double f64(const std::string& s, const std::string& k) {
        touch(s, k);
        return cfg_.get_f64(s, k);
    }
    double f64_or(const std::string& s, const std::string& k, double d) {
        touch(s, k);
        return cfg_.get_f64_or(s, k, d);
    }
    int i32(const std::string& s, const std::string& k) {
        touch(s, k);
        return static_cast<int>(cfg_.get_i64(s, k));
    }
    int i32_or(const std::string& s, const std::string& k, int d) {
        touch(s, k);
        return static_cast<int>(cfg_.get_i64_or(s, k, d));
    }
    std::uint64_t u64_or(const std::string& s, const std::string& k, std::uint64_t d) {
        touch(s, k);
        return cfg_.get_u64_or(s, k, d);
    }
    bool boolean_or(const std::string& s, const std::string& k, bool d) {
        touch(s, k);
        return cfg_.get_bool_or(s, k, d);
    }
    std::vector<double> f64_list(const std::string& s, const std::string& k) {
        touch(s, k);
        return cfg_.get_f64_list(s, k);
    }
    std::vector<double> f64_list_or(const std::string& s, const std::string& k,
                                    std::vector<double> d) {
        touch(s, k);
        return cfg_.has(s, k) ? cfg_.get_f64_list(s, k) : std::move(d);
    }
    std::vector<int> i32_list_or(const std::string& s, const std::string& k, std::vector<int> d) {
        touch(s, k);
        if (!cfg_.has(s, k)) return d;
        std::vector<int> out;
        for (std::int64_t v : cfg_.get_i64_list(s, k)) out.push_back(static_cast<int>(v));
        return out;
    }

    /// Throws listing every section or key present in the document that was
    /// never consumed above.
    void finish() const {
        std::vector<std::string> unknown;
        for (const auto& sec : cfg_.sections()) {
            if (known_sections_.count(sec.name) == 0) {
                unknown.push_back("[" + sec.name + "]");
                continue;
            }
            for (const auto& e : sec.entries) {
                if (consumed_.count(sec.name + "." + e.key) == 0) {
                    unknown.push_back(sec.name + "." + e.key);
                }
            }
        }
        if (!unknown.empty()) {
            std::string msg = "unknown config entr" + std::string(unknown.size() == 1 ? "y" : "ies");
            msg += ": ";
            for (std::size_t i = 0; i < unknown.size(); ++i) {
                if (i) msg += ", ";
                msg += unknown[i];
            }
            fail(msg);
        }
    }

  private:
    void touch(const std::string& s, const std::string& k) {
        known_sections_.insert(s);
        consumed_.insert(s + "." + k);
    }

    const Config& cfg_;
    std::set<std::string> known_sections_;
    std::set<std::string> consumed_;
};

}  // namespace

Region region_from_name(const std::string& name) {
    const auto& names = region_names();
    for (int i = 0; i < kNumRegions; ++i) {
        if (names[static_cast<std::size_t>(i)] == name) return static_cast<Region>(i);
    }
    fail("unknown region name '" + name + "'");
}

std::vector<Ellipse> parse_ellipses(const std::string& text, bool three_d) {
    std::vector<Ellipse> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t semi = text.find(';', start);
        const std::string piece =
            semi == std::string::npos ? text.substr(start) : text.substr(start, semi - start);
        start = semi == std::string::npos ? text.size() + 1 : semi + 1;

        std::istringstream in(piece);
        std::vector<double> nums;
        std::string tok;
        while (in >> tok) nums.push_back(parse_f64(tok));
        if (nums.empty()) continue;  // blank entry (e.g. trailing ';')

        const std::size_t want = three_d ? 6 : 4;
        if (nums.size() != want) {
            fail("ellipse entry '" + piece + "' has " + std::to_string(nums.size()) +
                 " numbers, expected " + std::to_string(want));
        }
        Ellipse e;
        if (three_d) {
            e = Ellipse{nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]};
        } else {
            e = Ellipse{nums[0], nums[1], 0.0, nums[2], nums[3], 0.0};
        }
        check(e.rx > 0 && e.ry > 0 && (!three_d || e.rz > 0),
              "ellipse radii must be positive in '" + piece + "'");
        out.push_back(e);
    }
    return out;
}

ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
    ExperimentConfig x;
    Reader r(cfg);

    x.grid.nx = r.i32("grid", "nx");
    x.grid.ny = r.i32("grid", "ny");
    x.grid.nz = r.i32_or("grid", "nz", 1);
    x.grid.pixel_size = r.f64("grid", "pixel_size");

    x.geom.n_angles = r.i32("geometry", "n_angles");
    x.geom.n_bins = r.i32("geometry", "n_bins");
    x.geom.bin_size = r.f64("geometry", "bin_size");
    x.geom.n_axial = x.grid.nz;

    const bool three_d = x.grid.nz > 1;
    x.phantom.gray = parse_ellipses(r.str_or("phantom", "gray", ""), three_d);
    x.phantom.white = parse_ellipses(r.str_or("phantom", "white", ""), three_d);
    x.phantom.blood = parse_ellipses(r.str_or("phantom", "blood", ""), three_d);
    x.phantom.tumor = parse_ellipses(r.str_or("phantom", "tumor", ""), three_d);

    x.tacs.values.resize(kNumRegions);
    const auto& names = region_names();
    for (int reg = 0; reg < kNumRegions; ++reg) {
        x.tacs.values[static_cast<std::size_t>(reg)] =
            r.f64_list("phantom", "tac_" + names[static_cast<std::size_t>(reg)]);
    }

    x.schedule = FramingSchedule(r.f64_list("schedule", "durations"));

    x.background_fraction = r.f64_or("simulation", "background_fraction", 0.2);
    x.target_counts = r.f64_or("simulation", "target_counts", 5e5);
    x.n_realizations = r.i32_or("simulation", "n_realizations", 1);
    x.seed = r.u64_or("simulation", "seed", 1);

    x.kernel.k = r.i32_or("kernel", "k", 48);
    x.kernel.sigma = r.f64_or("kernel", "sigma", 1.0);
    x.kernel.window = r.i32_or("kernel", "window", 0);
    x.kernel.row_normalize = r.boolean_or("kernel", "row_normalize", false);
    x.kernel.composite_ends_s = r.f64_list_or("kernel", "composite_ends", {});
    x.kernel.composite_mlem_iters = r.i32_or("kernel", "composite_mlem_iters", 60);
    const std::string src = r.str_or("kernel", "composite_source", "noisy");
    if (src == "noisy") {
        x.kernel.composite_from_noisy = true;
    } else if (src == "noisefree") {
        x.kernel.composite_from_noisy = false;
    } else {
        fail("kernel.composite_source must be 'noisy' or 'noisefree', got '" + src + "'");
    }

    x.network.scales = r.i32_or("network", "scales", 3);
    x.network.base_channels = r.i32_or("network", "base_channels", 16);

    x.mlem.iters = r.i32_or("recon.mlem", "iters", 60);
    x.kem.iters = r.i32_or("recon.kem", "iters", 60);
    x.neural_kem.iters = r.i32_or("recon.neural-kem", "iters", 60);
    x.neural_kem.subiters = r.i32_or("recon.neural-kem", "subiters", 150);
    x.neural_kem.lr = r.f64_or("recon.neural-kem", "lr", 1e-3);
    x.neural_kem.guard_retries = r.i32_or("recon.neural-kem", "guard_retries", 3);
    x.dip_ot.iters = r.i32_or("recon.dip-ot", "iters", 60);
    x.dip_ot.subiters = r.i32_or("recon.dip-ot", "subiters", 150);
    x.dip_ot.lr = r.f64_or("recon.dip-ot", "lr", 1e-3);
    x.dip_admm.iters = r.i32_or("recon.dip-admm", "iters", 60);
    x.dip_admm.rho = r.f64_or("recon.dip-admm", "rho", 0.05);
    x.dip_admm.recon_subiters = r.i32_or("recon.dip-admm", "recon_subiters", 4);
    x.dip_admm.mse_subiters = r.i32_or("recon.dip-admm", "mse_subiters", 50);
    x.dip_admm.lr = r.f64_or("recon.dip-admm", "lr", 1e-3);

    x.eval.iters = r.i32_list_or("eval", "iters", {10, 20, 30, 40, 50, 60});
    if (r.has("eval", "rois")) {
        x.eval.rois.clear();
        std::istringstream items(r.str("eval", "rois"));
        std::string tok;
        while (std::getline(items, tok, ',')) {
            const auto b = tok.find_first_not_of(" \t");
            const auto e = tok.find_last_not_of(" \t");
            check(b != std::string::npos, "eval.rois: empty element");
            x.eval.rois.push_back(region_from_name(tok.substr(b, e - b + 1)));
        }
        check(!x.eval.rois.empty(), "eval.rois: empty list");
    }
    x.eval.noise_roi = region_from_name(r.str_or("eval", "noise_roi", "white"));

    r.finish();
    x.validate();
    return x;
}

void ExperimentConfig::validate() const {
    check(grid.nx >= 1 && grid.ny >= 1 && grid.nz >= 1, "grid dims must be >= 1");
    check(grid.pixel_size > 0, "grid.pixel_size must be positive");
    check(geom.n_angles >= 1 && geom.n_bins >= 1, "geometry dims must be >= 1");
    check(geom.bin_size > 0, "geometry.bin_size must be positive");
    check(geom.n_axial == grid.nz, "geometry n_axial must match grid.nz");

    check(schedule.n_frames() >= 1, "schedule.durations must be nonempty");
    for (double d : schedule.durations_s) check(d > 0, "frame durations must be positive");

    tacs.validate();
    check(tacs.n_regions() == kNumRegions, "tac table must cover all regions");
    check(tacs.n_frames() == schedule.n_frames(),
          "tac length (" + std::to_string(tacs.n_frames()) + ") must match frame count (" +
              std::to_string(schedule.n_frames()) + ")");

    check(background_fraction >= 0 && background_fraction < 1,
          "simulation.background_fraction must be in [0, 1)");
    check(target_counts >= 0, "simulation.target_counts must be nonnegative");
    check(n_realizations >= 1, "simulation.n_realizations must be >= 1");

    check(kernel.k >= 0, "kernel.k must be nonnegative");
    check(kernel.sigma > 0, "kernel.sigma must be positive");
    check(kernel.window == 0 || (kernel.window >= 1 && kernel.window % 2 == 1),
          "kernel.window must be 0 or odd");
    check(kernel.composite_mlem_iters >= 1, "kernel.composite_mlem_iters must be >= 1");
    for (std::size_t i = 0; i < kernel.composite_ends_s.size(); ++i) {
        check(kernel.composite_ends_s[i] > 0, "kernel.composite_ends must be positive");
        if (i) {
            check(kernel.composite_ends_s[i] > kernel.composite_ends_s[i - 1],
                  "kernel.composite_ends must be strictly ascending");
        }
    }

    check(network.scales >= 1, "network.scales must be >= 1");
    check(network.base_channels >= 1, "network.base_channels must be >= 1");

    check(mlem.iters >= 1 && kem.iters >= 1 && neural_kem.iters >= 1 && dip_ot.iters >= 1 &&
              dip_admm.iters >= 1,
          "recon iters must be >= 1");
    check(neural_kem.subiters >= 1 && dip_ot.subiters >= 1, "subiters must be >= 1");
    check(neural_kem.lr > 0 && dip_ot.lr > 0 && dip_admm.lr > 0, "learning rates must be positive");
    check(neural_kem.guard_retries >= 0, "recon.neural-kem.guard_retries must be >= 0");
    check(dip_admm.rho > 0, "recon.dip-admm.rho must be positive");
    check(dip_admm.recon_subiters >= 1 && dip_admm.mse_subiters >= 1,
          "recon.dip-admm subiters must be >= 1");

    check(!eval.iters.empty(), "eval.iters must be nonempty");
    for (std::size_t i = 0; i < eval.iters.size(); ++i) {
        check(eval.iters[i] >= 1, "eval.iters must be >= 1");
        if (i) check(eval.iters[i] > eval.iters[i - 1], "eval.iters must be strictly ascending");
    }
}

std::vector<int> ExperimentConfig::checkpoint_iters(int method_iters) const {
    std::vector<int> out;
    for (int it : eval.iters) {
        if (it >= 1 && it <= method_iters) out.push_back(it);
    }
    if (out.empty() || out.back() != method_iters) out.push_back(method_iters);
    return out;
}

}  // namespace nkem
