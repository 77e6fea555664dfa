#include "nkem/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nkem/io.hpp"

namespace nkem {

void SparseMatrix::validate() const {
    require(row_offsets.size() == n_rows + 1, "sparse: row_offsets length mismatch");
    require(row_offsets.front() == 0, "sparse: row_offsets must start at 0");
    for (std::size_t i = 0; i < n_rows; ++i) {
        require(row_offsets[i] <= row_offsets[i + 1], "sparse: row_offsets not monotone");
    }
    require(row_offsets.back() == values.size(), "sparse: row_offsets end != nnz");
    require(col_indices.size() == values.size(), "sparse: col_indices length mismatch");
    for (std::uint32_t c : col_indices) {
        require(c < n_cols, "sparse: column index out of range");
    }
    for (double v : values) {
        require(std::isfinite(v) && v >= 0.0, "sparse: values must be finite and nonnegative");
    }
}

SparseMatrix SparseMatrix::identity(std::uint64_t n) {
    SparseMatrix a;
    a.n_rows = n;
    a.n_cols = n;
    a.row_offsets.resize(n + 1);
    a.col_indices.resize(n);
    a.values.assign(n, 1.0);
    for (std::uint64_t i = 0; i < n; ++i) {
        a.row_offsets[i] = i;
        a.col_indices[i] = static_cast<std::uint32_t>(i);
    }
    a.row_offsets[n] = n;
    return a;
}

std::vector<double> spmv(const SparseMatrix& a, const std::vector<double>& x) {
    require(x.size() == a.n_cols, "spmv: dimension mismatch");
    std::vector<double> y(a.n_rows, 0.0);
    for (std::size_t i = 0; i < a.n_rows; ++i) {
        double acc = 0.0;
        for (std::uint64_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
            acc += a.values[k] * x[a.col_indices[k]];
        }
        y[i] = acc;
    }
    return y;
}

std::vector<double> spmv_t(const SparseMatrix& a, const std::vector<double>& x) {
    require(x.size() == a.n_rows, "spmv_t: dimension mismatch");
    std::vector<double> y(a.n_cols, 0.0);
    for (std::size_t i = 0; i < a.n_rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (std::uint64_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
            y[a.col_indices[k]] += a.values[k] * xi;
        }
    }
    return y;
}

std::vector<double> column_sums(const SparseMatrix& a) {
    std::vector<double> s(a.n_cols, 0.0);
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        s[a.col_indices[k]] += a.values[k];
    }
    return s;
}

SparseMatrix transpose(const SparseMatrix& a) {
    SparseMatrix t;
    t.n_rows = a.n_cols;
    t.n_cols = a.n_rows;
    t.row_offsets.assign(a.n_cols + 1, 0);
    t.col_indices.resize(a.nnz());
    t.values.resize(a.nnz());
    // Count entries per output row, then prefix-sum into offsets.
    for (std::uint32_t c : a.col_indices) t.row_offsets[c + 1]++;
    for (std::size_t i = 0; i < a.n_cols; ++i) t.row_offsets[i + 1] += t.row_offsets[i];
    // Fill pass walks input rows in order, so each output row ends up sorted
    // by column (the original row index).
    std::vector<std::uint64_t> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
    for (std::size_t i = 0; i < a.n_rows; ++i) {
        for (std::uint64_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
            const std::uint64_t dst = cursor[a.col_indices[k]]++;
            t.col_indices[dst] = static_cast<std::uint32_t>(i);
            t.values[dst] = a.values[k];
        }
    }
    return t;
}

bool bitwise_equal(const SparseMatrix& a, const SparseMatrix& b) {
    return a.n_rows == b.n_rows && a.n_cols == b.n_cols && a.row_offsets == b.row_offsets &&
           a.col_indices == b.col_indices && a.values == b.values;
}

namespace {
constexpr char kMagic[4] = {'N', 'K', 'S', 'M'};
}

void save_nksm(const std::filesystem::path& path, const SparseMatrix& a) {
    a.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "save_nksm: cannot open " + path.string());
    out.write(kMagic, 4);
    bin::write_u64(out, a.n_rows);
    bin::write_u64(out, a.n_cols);
    bin::write_u64(out, a.nnz());
    for (std::uint64_t v : a.row_offsets) bin::write_u64(out, v);
    for (std::uint32_t v : a.col_indices) bin::write_u32(out, v);
    for (double v : a.values) bin::write_f64(out, v);
    out.flush();
    require(out.good(), "save_nksm: write failed for " + path.string());
}

SparseMatrix load_nksm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_nksm: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(in.good() && std::equal(magic, magic + 4, kMagic), "load_nksm: bad magic in " + path.string());
    SparseMatrix a;
    a.n_rows = bin::read_u64(in);
    a.n_cols = bin::read_u64(in);
    const std::uint64_t nnz = bin::read_u64(in);
    a.row_offsets.resize(a.n_rows + 1);
    a.col_indices.resize(nnz);
    a.values.resize(nnz);
    for (auto& v : a.row_offsets) v = bin::read_u64(in);
    for (auto& v : a.col_indices) v = bin::read_u32(in);
    for (auto& v : a.values) v = bin::read_f64(in);
    require(in.good(), "load_nksm: truncated file " + path.string());
    a.validate();
    return a;
}

}  // namespace nkem
