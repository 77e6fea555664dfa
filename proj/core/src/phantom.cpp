#include "nkem/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace nkem {

const std::array<std::string, kNumRegions>& region_names() {
    static const std::array<std::string, kNumRegions> names = {"background", "gray", "white",
                                                               "blood", "tumor"};
    return names;
}

std::size_t Phantom::region_size(int region) const {
    std::size_t n = 0;
    for (int l : label_map)
        if (l == region) ++n;
    return n;
}

Image Phantom::region_mask(int region) const {
    Image m(label_map.size(), 0.0);
    for (std::size_t j = 0; j < label_map.size(); ++j)
        if (label_map[j] == region) m[j] = 1.0;
    return m;
}

namespace {

bool inside(const Ellipse& e, double px, double py, double pz, bool three_d) {
    if (e.rx <= 0.0 || e.ry <= 0.0 || (three_d && e.rz <= 0.0)) return false;
    const double u = (px - e.cx) / e.rx;
    const double v = (py - e.cy) / e.ry;
    double q = u * u + v * v;
    if (three_d) {
        const double w = (pz - e.cz) / e.rz;
        q += w * w;
    }
    return q <= 1.0;
}

bool inside_any(const std::vector<Ellipse>& es, double px, double py, double pz, bool three_d) {
    for (const Ellipse& e : es)
        if (inside(e, px, py, pz, three_d)) return true;
    return false;
}

}  // namespace

Phantom make_phantom(const Grid& grid, const PhantomSpec& spec) {
    grid.validate();
    Phantom ph;
    ph.grid = grid;
    ph.label_map.assign(grid.num_pixels(), kBackground);
    const bool three_d = grid.is_3d();
    const double ps = grid.pixel_size;
    std::size_t j = 0;
    for (int iz = 0; iz < grid.nz; ++iz) {
        const double pz = grid.z0() + (iz + 0.5) * ps;
        for (int iy = 0; iy < grid.ny; ++iy) {
            const double py = grid.y0() + (iy + 0.5) * ps;
            for (int ix = 0; ix < grid.nx; ++ix, ++j) {
                const double px = grid.x0() + (ix + 0.5) * ps;
                const bool in_blood = inside_any(spec.blood, px, py, pz, three_d);
                const bool in_tumor = inside_any(spec.tumor, px, py, pz, three_d);
                require(!(in_blood && in_tumor), "make_phantom: blood and tumor regions overlap");
                int label = kBackground;
                if (inside_any(spec.gray, px, py, pz, three_d)) label = kGray;
                if (inside_any(spec.white, px, py, pz, three_d)) label = kWhite;
                if (in_blood) label = kBlood;
                if (in_tumor) label = kTumor;
                ph.label_map[j] = label;
            }
        }
    }
    return ph;
}

FramingSchedule::FramingSchedule(std::vector<double> d) : durations_s(std::move(d)) {
    for (double s : durations_s) require(s > 0.0, "FramingSchedule: durations must be > 0");
}

double FramingSchedule::start_time(int m) const {
    require(m >= 0 && m < n_frames(), "FramingSchedule: frame index out of range");
    double t = 0.0;
    for (int i = 0; i < m; ++i) t += durations_s[i];
    return t;
}

double FramingSchedule::total_duration() const {
    double t = 0.0;
    for (double s : durations_s) t += s;
    return t;
}

void TacTable::validate() const {
    require(!values.empty(), "TacTable: no regions");
    const std::size_t nf = values[0].size();
    require(nf > 0, "TacTable: no frames");
    for (const auto& row : values) {
        require(row.size() == nf, "TacTable: ragged rows");
        for (double v : row) {
            require(std::isfinite(v) && v >= 0.0, "TacTable: values must be finite and >= 0");
        }
    }
}

std::vector<Image> synthesize_frames(const Phantom& phantom, const TacTable& tacs,
                                     const FramingSchedule& schedule) {
    tacs.validate();
    require(schedule.n_frames() > 0, "synthesize_frames: empty schedule");
    require(tacs.n_frames() == schedule.n_frames(),
            "synthesize_frames: tac table frame count does not match schedule");
    int max_label = 0;
    for (int l : phantom.label_map) max_label = std::max(max_label, l);
    require(tacs.n_regions() > max_label, "synthesize_frames: missing region row in tac table");

    std::vector<Image> frames;
    frames.reserve(schedule.n_frames());
    for (int m = 0; m < schedule.n_frames(); ++m) {
        Image img(phantom.label_map.size());
        for (std::size_t j = 0; j < phantom.label_map.size(); ++j) {
            img[j] = tacs.at(phantom.label_map[j], m);
        }
        frames.push_back(std::move(img));
    }
    return frames;
}

}  // namespace nkem
