#pragma once

#include "nkem/sparse.hpp"
#include "nkem/types.hpp"

namespace nkem {

/// Exact intersection-length (Siddon) system matrix for parallel-beam
/// geometry. Row index is (z * n_angles + a) * n_bins + b; column index is
/// (z * ny + iy) * nx + ix. In 3D mode (grid.nz > 1) rays are traced per
/// transaxial slice, so geom.n_axial must equal grid.nz.
///
/// Throws if no ray intersects the grid at all.
SparseMatrix build_system_matrix(const Grid& grid, const ProjGeometry& geom);

Sinogram forward_project(const SparseMatrix& p, const Image& x);
Image back_project(const SparseMatrix& p, const Sinogram& q);

/// s = P^T 1, the per-pixel sensitivity. Pixels with s = 0 are outside the
/// scanner's view and are held at zero by the EM-type updates.
Image sensitivity(const SparseMatrix& p);

}  // namespace nkem
