#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nkem/sparse.hpp"
#include "nkem/types.hpp"

namespace nkem {

/// Per-pixel feature vectors extracted from composite prior images,
/// standardized per channel. Channels with zero variance are dropped;
/// their source indices are recorded for reporting.
struct FeatureSet {
    Grid grid;
    int n_channels = 0;
    std::vector<double> features;  // J * n_channels, pixel-major
    std::vector<double> channel_mean;
    std::vector<double> channel_std;  // population std of the raw channel
    std::vector<int> source_channel;
    std::vector<int> dropped_channels;

    std::size_t n_pixels() const { return grid.num_pixels(); }
    const double* feature(std::size_t j) const { return features.data() + j * n_channels; }
};

FeatureSet extract_features(const std::vector<Image>& composites, const Grid& grid);

/// Squared Euclidean feature distance between pixels a and b.
double feature_dist2(const FeatureSet& f, std::size_t a, std::size_t b);

/// k nearest candidates per pixel by feature distance, self excluded, ties
/// broken toward the lower pixel index. window > 0 restricts candidates to
/// an odd-sided box around the query pixel (per axis, including z on 3D
/// grids); 0 searches the whole image. Lists are returned sorted by index.
std::vector<std::vector<std::uint32_t>> knn_search(const FeatureSet& features, int k,
                                                   int window = 0);

/// Sparse kernel operator built from the radial Gaussian kernel
/// exp(-d^2 / (2 sigma^2)) over each pixel's neighbor set plus itself.
struct KernelModel {
    SparseMatrix k_mat;   // J x J
    SparseMatrix kt_mat;  // cached transpose
    int k = 0;
    double sigma = 1.0;
    int window = 0;
    bool row_normalized = false;

    static KernelModel identity(std::uint64_t n);
};

KernelModel build_kernel(const FeatureSet& features,
                         const std::vector<std::vector<std::uint32_t>>& neighbors, double sigma,
                         bool row_normalize = false);

Image apply_K(const KernelModel& model, const Image& v);
Image apply_Kt(const KernelModel& model, const Image& v);

/// w = K^T s with s the projector sensitivity; the denominator weight of
/// the coefficient-space EM update.
Image combined_weight(const KernelModel& model, const Image& s);

// Persists as <stem>.nksm (matrix) plus <stem>.meta (k, sigma, window,
// normalization flag, channel stats). The transpose is rebuilt on load.
void save_kernel(const std::filesystem::path& stem, const KernelModel& model,
                 const FeatureSet& features);
KernelModel load_kernel(const std::filesystem::path& stem);

}  // namespace nkem
