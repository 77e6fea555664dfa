#include "nkem/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "nkem/io.hpp"

namespace nkem {

FeatureSet extract_features(const std::vector<Image>& composites, const Grid& grid) {
    require(!composites.empty(), "extract_features: need at least one composite channel");
    const std::size_t j_count = grid.num_pixels();
    for (const Image& c : composites) {
        require(c.size() == j_count, "extract_features: composite size does not match grid");
        require(all_finite(c.data), "extract_features: composite must be finite");
    }

    FeatureSet fs;
    fs.grid = grid;
    std::vector<std::size_t> kept;
    std::vector<double> means, stds;
    for (std::size_t c = 0; c < composites.size(); ++c) {
        double mean = sum(composites[c].data) / static_cast<double>(j_count);
        double var = 0.0;
        for (double v : composites[c].data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(j_count);
        if (var <= 0.0) {
            fs.dropped_channels.push_back(static_cast<int>(c));
            continue;
        }
        kept.push_back(c);
        means.push_back(mean);
        stds.push_back(std::sqrt(var));
    }
    require(!kept.empty(), "extract_features: all channels have zero variance");

    fs.n_channels = static_cast<int>(kept.size());
    fs.channel_mean = means;
    fs.channel_std = stds;
    for (std::size_t c : kept) fs.source_channel.push_back(static_cast<int>(c));
    fs.features.resize(j_count * kept.size());
    for (std::size_t j = 0; j < j_count; ++j) {
        for (std::size_t c = 0; c < kept.size(); ++c) {
            fs.features[j * kept.size() + c] = (composites[kept[c]][j] - means[c]) / stds[c];
        }
    }
    return fs;
}

double feature_dist2(const FeatureSet& f, std::size_t a, std::size_t b) {
    const double* fa = f.feature(a);
    const double* fb = f.feature(b);
    double d2 = 0.0;
    for (int c = 0; c < f.n_channels; ++c) {
        const double d = fa[c] - fb[c];
        d2 += d * d;
    }
    return d2;
}

std::vector<std::vector<std::uint32_t>> knn_search(const FeatureSet& features, int k, int window) {
    const Grid& g = features.grid;
    const std::size_t j_count = features.n_pixels();
    require(k >= 0 && static_cast<std::size_t>(k) < j_count, "knn_search: k must be < J");
    require(window >= 0, "knn_search: window must be >= 0");
    require(window == 0 || window % 2 == 1, "knn_search: window side must be odd");

    std::vector<std::vector<std::uint32_t>> lists(j_count);
    if (k == 0) return lists;

    const int half = window / 2;
    const std::size_t slice = static_cast<std::size_t>(g.nx) * g.ny;
    std::vector<std::pair<double, std::uint32_t>> cand;
    for (std::size_t j = 0; j < j_count; ++j) {
        cand.clear();
        if (window == 0) {
            for (std::size_t l = 0; l < j_count; ++l) {
                if (l == j) continue;
                cand.emplace_back(feature_dist2(features, j, l), static_cast<std::uint32_t>(l));
            }
        } else {
            const int jz = static_cast<int>(j / slice);
            const int jy = static_cast<int>((j % slice) / g.nx);
            const int jx = static_cast<int>(j % g.nx);
            const int z_lo = g.is_3d() ? std::max(0, jz - half) : jz;
            const int z_hi = g.is_3d() ? std::min(g.nz - 1, jz + half) : jz;
            for (int z = z_lo; z <= z_hi; ++z) {
                for (int y = std::max(0, jy - half); y <= std::min(g.ny - 1, jy + half); ++y) {
                    for (int x = std::max(0, jx - half); x <= std::min(g.nx - 1, jx + half); ++x) {
                        const std::size_t l = (static_cast<std::size_t>(z) * g.ny + y) * g.nx + x;
                        if (l == j) continue;
                        cand.emplace_back(feature_dist2(features, j, l),
                                          static_cast<std::uint32_t>(l));
                    }
                }
            }
        }
        require(cand.size() >= static_cast<std::size_t>(k),
                "knn_search: window holds fewer candidates than k");
        // (distance, index) lexicographic order realizes the low-index
        // tie-break exactly.
        std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
        cand.resize(k);
        std::vector<std::uint32_t> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = cand[i].second;
        std::sort(idx.begin(), idx.end());
        lists[j] = std::move(idx);
    }
    return lists;
}

KernelModel KernelModel::identity(std::uint64_t n) {
    KernelModel m;
    m.k_mat = SparseMatrix::identity(n);
    m.kt_mat = m.k_mat;
    return m;
}

KernelModel build_kernel(const FeatureSet& features,
                         const std::vector<std::vector<std::uint32_t>>& neighbors, double sigma,
                         bool row_normalize) {
    require(sigma > 0.0, "build_kernel: sigma must be > 0");
    const std::size_t j_count = features.n_pixels();
    require(neighbors.size() == j_count, "build_kernel: neighbor list count mismatch");

    KernelModel model;
    model.sigma = sigma;
    model.row_normalized = row_normalize;
    std::size_t max_k = 0;

    SparseMatrix& km = model.k_mat;
    km.n_rows = j_count;
    km.n_cols = j_count;
    km.row_offsets.resize(j_count + 1);
    km.row_offsets[0] = 0;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    std::vector<std::pair<std::uint32_t, double>> row;
    for (std::size_t j = 0; j < j_count; ++j) {
        max_k = std::max(max_k, neighbors[j].size());
        row.clear();
        row.emplace_back(static_cast<std::uint32_t>(j), 1.0);  // self, zero distance
        for (std::uint32_t l : neighbors[j]) {
            require(l < j_count, "build_kernel: neighbor index out of range");
            require(l != j, "build_kernel: self listed as neighbor");
            row.emplace_back(l, std::exp(-feature_dist2(features, j, l) * inv2s2));
        }
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        if (row_normalize) {
            double s = 0.0;
            for (const auto& [c, v] : row) s += v;
            for (auto& [c, v] : row) v /= s;
        }
        for (const auto& [c, v] : row) {
            km.col_indices.push_back(c);
            km.values.push_back(v);
        }
        km.row_offsets[j + 1] = km.values.size();
    }
    km.validate();
    model.k = static_cast<int>(max_k);
    model.kt_mat = transpose(km);
    return model;
}

Image apply_K(const KernelModel& model, const Image& v) {
    return Image(spmv(model.k_mat, v.data));
}

Image apply_Kt(const KernelModel& model, const Image& v) {
    return Image(spmv(model.kt_mat, v.data));
}

Image combined_weight(const KernelModel& model, const Image& s) {
    return apply_Kt(model, s);
}

void save_kernel(const std::filesystem::path& stem, const KernelModel& model,
                 const FeatureSet& features) {
    save_nksm(stem.string() + ".nksm", model.k_mat);
    KvFile kv;
    kv.set("kind", "kernel_model");
    kv.set_i64("k", model.k);
    kv.set_f64("sigma", model.sigma);
    kv.set_i64("window", model.window);
    kv.set_i64("row_normalized", model.row_normalized ? 1 : 0);
    kv.set_i64("n_channels", features.n_channels);
    for (int c = 0; c < features.n_channels; ++c) {
        const std::string suffix = "_" + std::to_string(c);
        kv.set_i64("source" + suffix, features.source_channel[c]);
        kv.set_f64("mean" + suffix, features.channel_mean[c]);
        kv.set_f64("std" + suffix, features.channel_std[c]);
    }
    kv.save(stem.string() + ".meta");
}

KernelModel load_kernel(const std::filesystem::path& stem) {
    KernelModel model;
    model.k_mat = load_nksm(stem.string() + ".nksm");
    require(model.k_mat.n_rows == model.k_mat.n_cols, "load_kernel: matrix must be square");
    const KvFile kv = KvFile::load(stem.string() + ".meta");
    require(kv.get("kind") == "kernel_model", "load_kernel: bad sidecar");
    model.k = static_cast<int>(kv.get_i64("k"));
    model.sigma = kv.get_f64("sigma");
    model.window = static_cast<int>(kv.get_i64("window"));
    model.row_normalized = kv.get_i64("row_normalized") != 0;
    model.kt_mat = transpose(model.k_mat);
    return model;
}

}  // namespace nkem
