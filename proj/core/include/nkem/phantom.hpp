#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nkem/types.hpp"

namespace nkem {

// Region labels used by the dynamic phantom, in draw order.
enum Region : int {
    kBackground = 0,
    kGray = 1,
    kWhite = 2,
    kBlood = 3,
    kTumor = 4,
};
inline constexpr int kNumRegions = 5;
const std::array<std::string, kNumRegions>& region_names();

/// Axis-aligned ellipse/ellipsoid in physical coordinates (mm). rz is
/// ignored on 2D grids.
struct Ellipse {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double rx = 0.0, ry = 0.0, rz = 0.0;
};

/// Geometric description of the four foreground regions; a region may be
/// the union of several ellipses (e.g. paired blood pools). Empty spec
/// yields an all-background phantom.
struct PhantomSpec {
    std::vector<Ellipse> gray;
    std::vector<Ellipse> white;
    std::vector<Ellipse> blood;
    std::vector<Ellipse> tumor;
};

struct Phantom {
    std::vector<int> label_map;  // length J, values in [0, kNumRegions)
    Grid grid;

    std::size_t region_size(int region) const;
    /// Binary mask (1.0 inside) of one region.
    Image region_mask(int region) const;
};

/// Rasterizes the spec onto the grid with pixel-center inclusion, painting
/// gray, white, blood, tumor in that order. A pixel covered by both a blood
/// and a tumor ellipse is a specification error.
Phantom make_phantom(const Grid& grid, const PhantomSpec& spec);

/// Frame time structure of a dynamic scan.
struct FramingSchedule {
    std::vector<double> durations_s;

    FramingSchedule() = default;
    explicit FramingSchedule(std::vector<double> d);

    int n_frames() const { return static_cast<int>(durations_s.size()); }
    double start_time(int m) const;  // seconds from scan start
    double end_time(int m) const { return start_time(m) + durations_s[m]; }
    double total_duration() const;
};

/// Per-region activity concentration per frame: values[region][frame].
struct TacTable {
    std::vector<std::vector<double>> values;

    int n_regions() const { return static_cast<int>(values.size()); }
    int n_frames() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
    double at(int region, int frame) const { return values[region][frame]; }
    void validate() const;
};

/// Paints tac[region, m] onto each region for every frame m. Frame-duration
/// scaling happens at the projection/simulation stage, not here.
std::vector<Image> synthesize_frames(const Phantom& phantom, const TacTable& tacs,
                                     const FramingSchedule& schedule);

}  // namespace nkem
