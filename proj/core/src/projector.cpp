#include "nkem/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace nkem {

namespace {

struct RayEntry {
    std::uint32_t pixel;
    double length;
};

// Traces one 2D ray through the grid and appends (pixel, length) pairs.
// The ray passes through t * (cos a, sin a) with unit direction
// (-sin a, cos a); entries are intersection lengths in mm.
void trace_ray(const Grid& grid, double angle, double t, std::vector<double>& s_buf,
               std::vector<RayEntry>& out) {
    const double ps = grid.pixel_size;
    const double cx = t * std::cos(angle);
    const double cy = t * std::sin(angle);
    const double dx = -std::sin(angle);
    const double dy = std::cos(angle);
    const double gx0 = grid.x0();
    const double gy0 = grid.y0();
    const double gx1 = gx0 + grid.nx * ps;
    const double gy1 = gy0 + grid.ny * ps;

    // Slab-clip the infinite line against the grid box.
    double s_lo = -std::numeric_limits<double>::infinity();
    double s_hi = std::numeric_limits<double>::infinity();
    const double tiny = 1e-14;
    if (std::abs(dx) < tiny) {
        if (cx < gx0 || cx > gx1) return;
    } else {
        const double a = (gx0 - cx) / dx;
        const double b = (gx1 - cx) / dx;
        s_lo = std::max(s_lo, std::min(a, b));
        s_hi = std::min(s_hi, std::max(a, b));
    }
    if (std::abs(dy) < tiny) {
        if (cy < gy0 || cy > gy1) return;
    } else {
        const double a = (gy0 - cy) / dy;
        const double b = (gy1 - cy) / dy;
        s_lo = std::max(s_lo, std::min(a, b));
        s_hi = std::min(s_hi, std::max(a, b));
    }
    if (!(s_hi > s_lo)) return;

    // Collect plane crossings inside the clip range; the direction is a unit
    // vector, so parameter differences are lengths.
    s_buf.clear();
    s_buf.push_back(s_lo);
    s_buf.push_back(s_hi);
    if (std::abs(dx) >= tiny) {
        for (int i = 0; i <= grid.nx; ++i) {
            const double s = (gx0 + i * ps - cx) / dx;
            if (s > s_lo && s < s_hi) s_buf.push_back(s);
        }
    }
    if (std::abs(dy) >= tiny) {
        for (int j = 0; j <= grid.ny; ++j) {
            const double s = (gy0 + j * ps - cy) / dy;
            if (s > s_lo && s < s_hi) s_buf.push_back(s);
        }
    }
    std::sort(s_buf.begin(), s_buf.end());

    const double min_len = 1e-12 * ps;
    for (std::size_t k = 0; k + 1 < s_buf.size(); ++k) {
        const double len = s_buf[k + 1] - s_buf[k];
        if (len <= min_len) continue;
        const double sm = 0.5 * (s_buf[k] + s_buf[k + 1]);
        const double mx = cx + sm * dx;
        const double my = cy + sm * dy;
        int ix = static_cast<int>(std::floor((mx - gx0) / ps));
        int iy = static_cast<int>(std::floor((my - gy0) / ps));
        ix = std::clamp(ix, 0, grid.nx - 1);
        iy = std::clamp(iy, 0, grid.ny - 1);
        out.push_back({static_cast<std::uint32_t>(iy * grid.nx + ix), len});
    }
}

}  // namespace

SparseMatrix build_system_matrix(const Grid& grid, const ProjGeometry& geom) {
    grid.validate();
    geom.validate();
    require(geom.n_axial == grid.nz, "build_system_matrix: n_axial must equal grid nz");

    // Trace the shared 2D pattern once.
    const std::size_t rays_2d = static_cast<std::size_t>(geom.n_angles) * geom.n_bins;
    std::vector<std::uint64_t> offs_2d(rays_2d + 1, 0);
    std::vector<RayEntry> entries;
    std::vector<double> s_buf;
    std::vector<RayEntry> ray;
    for (int a = 0; a < geom.n_angles; ++a) {
        const double ang = geom.angle(a);
        for (int b = 0; b < geom.n_bins; ++b) {
            ray.clear();
            trace_ray(grid, ang, geom.bin_center(b), s_buf, ray);
            entries.insert(entries.end(), ray.begin(), ray.end());
            offs_2d[static_cast<std::size_t>(a) * geom.n_bins + b + 1] = entries.size();
        }
    }
    require(!entries.empty(), "build_system_matrix: no ray intersects the image grid");

    // Replicate per slice with row/column offsets.
    SparseMatrix p;
    p.n_rows = geom.num_rays();
    p.n_cols = grid.num_pixels();
    const std::size_t slice_pixels = static_cast<std::size_t>(grid.nx) * grid.ny;
    p.row_offsets.resize(p.n_rows + 1);
    p.col_indices.reserve(entries.size() * grid.nz);
    p.values.reserve(entries.size() * grid.nz);
    p.row_offsets[0] = 0;
    for (int z = 0; z < grid.nz; ++z) {
        const std::uint32_t col_off = static_cast<std::uint32_t>(z * slice_pixels);
        const std::size_t row_off = static_cast<std::size_t>(z) * rays_2d;
        for (std::size_t r = 0; r < rays_2d; ++r) {
            for (std::uint64_t k = offs_2d[r]; k < offs_2d[r + 1]; ++k) {
                p.col_indices.push_back(entries[k].pixel + col_off);
                p.values.push_back(entries[k].length);
            }
            p.row_offsets[row_off + r + 1] = p.values.size();
        }
    }
    p.validate();
    return p;
}

Sinogram forward_project(const SparseMatrix& p, const Image& x) {
    return Sinogram(spmv(p, x.data));
}

Image back_project(const SparseMatrix& p, const Sinogram& q) {
    return Image(spmv_t(p, q.data));
}

Image sensitivity(const SparseMatrix& p) {
    return Image(column_sums(p));
}

}  // namespace nkem
