// Microbenchmarks for the hot paths: projection, EM/KEM updates, network
// convolutions, kNN search, and Poisson sampling.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "nkem/kernel.hpp"
#include "nkem/layers.hpp"
#include "nkem/projector.hpp"
#include "nkem/recon.hpp"
#include "nkem/rng.hpp"
#include "nkem/simulate.hpp"
#include "nkem/tensor.hpp"
#include "nkem/types.hpp"

namespace {

using namespace nkem;

Grid bench_grid() { return Grid(64, 64, 4.0); }
ProjGeometry bench_geom() { return ProjGeometry(96, 96, 4.0); }

/// Smooth positive test image: a centered Gaussian blob on a low plateau.
Image bench_image(const Grid& g) {
    Image x(g.num_pixels(), 0.1);
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double dx = ix - 0.5 * (g.nx - 1);
            const double dy = iy - 0.5 * (g.ny - 1);
            x[static_cast<std::size_t>(iy) * static_cast<std::size_t>(g.nx) +
              static_cast<std::size_t>(ix)] += 4.0 * std::exp(-(dx * dx + dy * dy) / 300.0);
        }
    }
    return x;
}

struct ProjFixture {
    Grid grid = bench_grid();
    ProjGeometry geom = bench_geom();
    SparseMatrix p;
    Image x;
    Sinogram y;
    ProjFixture() : p(build_system_matrix(grid, geom)), x(bench_image(grid)) {
        y = forward_project(p, x);
    }
};

ProjFixture& proj_fixture() {
    static ProjFixture f;
    return f;
}

void BM_BuildSystemMatrix(benchmark::State& state) {
    const Grid g = bench_grid();
    const ProjGeometry geom = bench_geom();
    for (auto _ : state) {
        SparseMatrix p = build_system_matrix(g, geom);
        benchmark::DoNotOptimize(p.values.data());
    }
}
BENCHMARK(BM_BuildSystemMatrix)->Unit(benchmark::kMillisecond);

void BM_ForwardProject(benchmark::State& state) {
    ProjFixture& f = proj_fixture();
    for (auto _ : state) {
        Sinogram y = forward_project(f.p, f.x);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_ForwardProject)->Unit(benchmark::kMicrosecond);

void BM_BackProject(benchmark::State& state) {
    ProjFixture& f = proj_fixture();
    for (auto _ : state) {
        Image x = back_project(f.p, f.y);
        benchmark::DoNotOptimize(x.data.data());
    }
}
BENCHMARK(BM_BackProject)->Unit(benchmark::kMicrosecond);

void BM_EmStep(benchmark::State& state) {
    ProjFixture& f = proj_fixture();
    const Image s = sensitivity(f.p);
    const Sinogram y = poisson_sample(f.y, 7);
    const Sinogram r(f.geom.num_rays(), 0.05);
    Image x(f.grid.num_pixels(), 1.0);
    for (auto _ : state) {
        x = em_step(f.p, y, r, x, s);
        benchmark::DoNotOptimize(x.data.data());
    }
}
BENCHMARK(BM_EmStep)->Unit(benchmark::kMicrosecond);

void BM_KemStep(benchmark::State& state) {
    ProjFixture& f = proj_fixture();
    const Image s = sensitivity(f.p);
    const Sinogram y = poisson_sample(f.y, 7);
    const Sinogram r(f.geom.num_rays(), 0.05);

    std::vector<Image> comps = {f.x, bench_image(f.grid)};
    const FeatureSet feats = extract_features(comps, f.grid);
    const auto nbrs = knn_search(feats, 24);
    const KernelModel k = build_kernel(feats, nbrs, 1.0);
    const Image w = combined_weight(k, s);
    Image alpha(f.grid.num_pixels(), 1.0);
    for (auto _ : state) {
        alpha = kem_step(f.p, k, y, r, alpha, w);
        benchmark::DoNotOptimize(alpha.data.data());
    }
}
BENCHMARK(BM_KemStep)->Unit(benchmark::kMicrosecond);

void BM_KnnSearch(benchmark::State& state) {
    ProjFixture& f = proj_fixture();
    std::vector<Image> comps = {f.x, bench_image(f.grid)};
    const FeatureSet feats = extract_features(comps, f.grid);
    for (auto _ : state) {
        auto nbrs = knn_search(feats, 24);
        benchmark::DoNotOptimize(nbrs.data());
    }
}
BENCHMARK(BM_KnnSearch)->Unit(benchmark::kMillisecond);

void BM_ConvForward(benchmark::State& state) {
    const int c = 16;
    Tensor x = make_activation("x", ActShape{c, 1, 64, 64});
    Rng rng(3);
    for (double& v : x.data) v = rng.normal();
    Tensor w;
    w.name = "w";
    w.shape = {c, c, 1, 3, 3};
    w.data.resize(static_cast<std::size_t>(c) * c * 9);
    for (double& v : w.data) v = rng.normal() * 0.05;
    Tensor b;
    b.name = "b";
    b.shape = {c};
    b.data.assign(static_cast<std::size_t>(c), 0.0);
    Tensor y;
    for (auto _ : state) {
        conv_forward(x, w, b, 1, y);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_ConvForward)->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
    const int c = 16;
    Tensor x = make_activation("x", ActShape{c, 1, 64, 64});
    Rng rng(3);
    for (double& v : x.data) v = rng.normal();
    Tensor w;
    w.name = "w";
    w.shape = {c, c, 1, 3, 3};
    w.data.resize(static_cast<std::size_t>(c) * c * 9);
    for (double& v : w.data) v = rng.normal() * 0.05;
    Tensor b;
    b.name = "b";
    b.shape = {c};
    b.data.assign(static_cast<std::size_t>(c), 0.0);
    Tensor y;
    conv_forward(x, w, b, 1, y);
    Tensor gy = make_activation("gy", act_shape(y));
    for (double& v : gy.data) v = rng.normal();
    Tensor gx;
    x.ensure_grad();
    w.ensure_grad();
    b.ensure_grad();
    for (auto _ : state) {
        conv_backward(x, w, b, 1, gy, &gx);
        benchmark::DoNotOptimize(gx.data.data());
    }
}
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMicrosecond);

void BM_PoissonSample(benchmark::State& state) {
    ProjFixture& f = proj_fixture();
    Sinogram ybar = f.y;
    for (double& v : ybar.data) v = v * 3.0 + 0.01;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        Sinogram y = poisson_sample(ybar, ++seed);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_PoissonSample)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
