#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace nkem {

/// Regular pixel grid, centered on the origin. nz = 1 selects 2D mode;
/// nz > 1 stacks transaxial slices along z.
struct Grid {
    int nx = 0;
    int ny = 0;
    int nz = 1;
    double pixel_size = 1.0;  // mm, isotropic

    Grid() = default;
    Grid(int nx_, int ny_, double pixel_size_, int nz_ = 1)
        : nx(nx_), ny(ny_), nz(nz_), pixel_size(pixel_size_) {
        validate();
    }

    void validate() const {
        if (nx < 1 || ny < 1 || nz < 1)
            throw std::invalid_argument("Grid: pixel counts must be >= 1");
        if (!(pixel_size > 0.0))
            throw std::invalid_argument("Grid: pixel_size must be > 0");
    }

    std::size_t num_pixels() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool is_3d() const { return nz > 1; }

    // Physical coordinate of the low edge of pixel column/row 0.
    double x0() const { return -0.5 * nx * pixel_size; }
    double y0() const { return -0.5 * ny * pixel_size; }
    double z0() const { return -0.5 * nz * pixel_size; }

    bool operator==(const Grid&) const = default;
};

/// Parallel-beam projection geometry. Angles are uniformly spaced over
/// [0, pi); each angle has n_bins radial bins centered on the origin.
/// For stacked-2D 3D mode, n_axial copies of the 2D geometry are applied
/// per slice; sinogram length is n_angles * n_bins * n_axial.
struct ProjGeometry {
    int n_angles = 0;
    int n_bins = 0;
    double bin_size = 1.0;  // mm
    int n_axial = 1;

    ProjGeometry() = default;
    ProjGeometry(int n_angles_, int n_bins_, double bin_size_, int n_axial_ = 1)
        : n_angles(n_angles_), n_bins(n_bins_), bin_size(bin_size_), n_axial(n_axial_) {
        validate();
    }

    void validate() const {
        if (n_angles < 1 || n_bins < 1 || n_axial < 1)
            throw std::invalid_argument("ProjGeometry: counts must be >= 1");
        if (!(bin_size > 0.0))
            throw std::invalid_argument("ProjGeometry: bin_size must be > 0");
    }

    double angle(int a) const;  // radians, in [0, pi)

    // Radial offset of bin b from the rotation center, bins centered.
    double bin_center(int b) const {
        return (b - 0.5 * (n_bins - 1)) * bin_size;
    }

    std::size_t num_rays() const {
        return static_cast<std::size_t>(n_angles) * static_cast<std::size_t>(n_bins) *
               static_cast<std::size_t>(n_axial);
    }

    bool operator==(const ProjGeometry&) const = default;
};

/// Image-domain array over a Grid (activity, coefficients, weights, masks).
struct Image {
    std::vector<double> data;

    Image() = default;
    explicit Image(std::size_t n, double fill = 0.0) : data(n, fill) {}
    explicit Image(std::vector<double> v) : data(std::move(v)) {}
    Image(std::initializer_list<double> il) : data(il) {}

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double* begin() { return data.data(); }
    double* end() { return data.data() + data.size(); }
    const double* begin() const { return data.data(); }
    const double* end() const { return data.data() + data.size(); }
};

/// Projection-domain array (counts, expectations, backgrounds).
struct Sinogram {
    std::vector<double> data;

    Sinogram() = default;
    explicit Sinogram(std::size_t n, double fill = 0.0) : data(n, fill) {}
    explicit Sinogram(std::vector<double> v) : data(std::move(v)) {}
    Sinogram(std::initializer_list<double> il) : data(il) {}

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

double dot(const std::vector<double>& a, const std::vector<double>& b);
double l2_norm(const std::vector<double>& a);
double sum(const std::vector<double>& a);
bool all_finite(const std::vector<double>& a);

/// Relative L2 distance ||a-b|| / max(||b||, eps).
double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b);

void require(bool cond, const std::string& what);

}  // namespace nkem
