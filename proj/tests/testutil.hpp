#pragma once

// Shared fixtures and independent oracles for the test suites: dense
// matrix references for sparse ops, a brute-force kNN search, a central
// finite-difference gradient checker, and small study builders.

#include <cstdint>
#include <functional>
#include <vector>

#include "nkem/kernel.hpp"
#include "nkem/rng.hpp"
#include "nkem/sparse.hpp"
#include "nkem/tensor.hpp"
#include "nkem/types.hpp"

namespace nkemtest {

using nkem::FeatureSet;
using nkem::Grid;
using nkem::Image;
using nkem::ProjGeometry;
using nkem::Rng;
using nkem::Sinogram;
using nkem::SparseMatrix;
using nkem::Tensor;

/// Uniform values in [lo, hi).
std::vector<double> random_vec(std::size_t n, Rng& rng, double lo, double hi);

/// Dense reference for sparse ops.
std::vector<std::vector<double>> to_dense(const SparseMatrix& m);
std::vector<double> dense_mv(const std::vector<std::vector<double>>& a,
                             const std::vector<double>& x);
std::vector<double> dense_mtv(const std::vector<std::vector<double>>& a,
                              const std::vector<double>& x);

/// Exhaustive O(J^2) kNN with the production tie-break: order candidates by
/// (squared distance, index), keep the first k; window > 0 restricts to the
/// centered odd box in grid coordinates.
std::vector<std::vector<std::uint32_t>> knn_bruteforce(const FeatureSet& f, int k, int window = 0);

/// The 2x2 projector used throughout the module examples:
/// P = [[1, 0], [0.5, 0.5]].
SparseMatrix tiny_p();

/// Builds a sparse matrix from dense rows (zeros dropped).
SparseMatrix from_dense(const std::vector<std::vector<double>>& rows);

/// Central finite-difference check of d(loss)/d(t.data[i]) against the
/// values in `analytic`, for up to max_components deterministically sampled
/// components. loss() must evaluate with the current contents of t.data.
/// Per-component error is |fd - an| / max(1, |fd|, |an|); returns the max.
struct FdReport {
    double max_err = 0.0;
    std::size_t n_checked = 0;
};
FdReport fd_check_tensor(const std::function<double()>& loss, Tensor& t,
                         const std::vector<double>& analytic, double h, int max_components,
                         Rng& rng);

/// Small reconstruction problem: a disk phantom on an n x n grid, fully
/// covered parallel-beam geometry, Poisson counts with a uniform background.
struct SmallStudy {
    Grid grid;
    ProjGeometry geom;
    SparseMatrix p;
    Image x_true;
    Sinogram y;
    Sinogram r;
};
SmallStudy make_small_study(int n, std::uint64_t seed, double background_fraction = 0.2,
                            double target_counts = 20000.0);

}  // namespace nkemtest
