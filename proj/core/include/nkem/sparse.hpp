#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nkem/types.hpp"

namespace nkem {

/// Row-compressed nonnegative sparse operator (system matrix P, kernel
/// matrix K). Immutable after construction; safe for concurrent reads.
struct SparseMatrix {
    std::uint64_t n_rows = 0;
    std::uint64_t n_cols = 0;
    std::vector<std::uint64_t> row_offsets;  // length n_rows + 1
    std::vector<std::uint32_t> col_indices;  // length nnz
    std::vector<double> values;              // length nnz, all >= 0

    std::uint64_t nnz() const { return values.size(); }

    /// Structural and value checks (offsets monotone, indices in range,
    /// values finite and nonnegative). Throws on violation.
    void validate() const;

    static SparseMatrix identity(std::uint64_t n);
};

/// y = A x
std::vector<double> spmv(const SparseMatrix& a, const std::vector<double>& x);
/// y = A^T x
std::vector<double> spmv_t(const SparseMatrix& a, const std::vector<double>& x);

/// Column sums (equals A^T * ones).
std::vector<double> column_sums(const SparseMatrix& a);

/// Explicit transpose with rows in ascending column order; deterministic.
SparseMatrix transpose(const SparseMatrix& a);

bool bitwise_equal(const SparseMatrix& a, const SparseMatrix& b);

// "NKSM" container: magic, u64 n_rows/n_cols/nnz, then row_offsets (u64),
// col_indices (u32), values (f64), little-endian.
void save_nksm(const std::filesystem::path& path, const SparseMatrix& a);
SparseMatrix load_nksm(const std::filesystem::path& path);

}  // namespace nkem
