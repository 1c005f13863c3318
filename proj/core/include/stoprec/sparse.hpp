/// @file sparse.hpp
/// @brief Compressed-row sparse matrix storage and the kernels built on it.

#ifndef STOPREC_SPARSE_HPP
#define STOPREC_SPARSE_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace stoprec {

using index_t = std::size_t;
using DenseVector = std::vector<double>;

/// One (row, col, value) entry used when assembling a matrix.
struct Triplet {
    index_t row = 0;
    index_t col = 0;
    double value = 0.0;
};

/// Sparse matrix in CSR format with owned storage.
///
/// Canonical form, established by every constructor and preserved by every
/// operation in this library:
///   - row_offsets has length nrows+1, is non-decreasing, starts at 0 and
///     ends at nnz();
///   - column indices are strictly increasing within each row and < ncols;
///   - no explicitly stored zero values.
///
/// Instances are immutable after construction and safe to share across
/// threads.
struct SparseMatrix {
    index_t nrows = 0;
    index_t ncols = 0;
    std::vector<index_t> row_offsets{0};
    std::vector<index_t> col_indices;
    std::vector<double> values;

    index_t nnz() const { return values.size(); }

    /// nnz / n^2, the filling factor phi(A).
    double fill_fraction() const;

    /// Value at (i, j); 0 if not stored. Binary search within the row.
    double at(index_t i, index_t j) const;

    /// Assemble from triplets: duplicates are summed, zeros (including
    /// duplicates cancelling to zero) are dropped, rows are sorted.
    static SparseMatrix from_triplets(index_t nrows, index_t ncols,
                                      std::vector<Triplet> entries);

    /// Wrap raw CSR arrays. Throws if the arrays violate canonical form.
    static SparseMatrix from_csr(index_t nrows, index_t ncols,
                                 std::vector<index_t> row_offsets,
                                 std::vector<index_t> col_indices,
                                 std::vector<double> values);

    static SparseMatrix identity(index_t n);
};

/// y = A x. Summation order within a row is fixed (ascending column index),
/// so the result is bitwise deterministic.
DenseVector spmv(const SparseMatrix& A, const DenseVector& x);

/// y = A x into a caller-provided buffer (no allocation).
void spmv(const SparseMatrix& A, const double* x, double* y);

SparseMatrix transpose(const SparseMatrix& A);

struct MatrixNorms {
    double one_norm = 0.0;   ///< max column abs sum
    double inf_norm = 0.0;   ///< max row abs sum
    double frob_norm = 0.0;  ///< sqrt of sum of squares
};

MatrixNorms norms(const SparseMatrix& A);

/// Read a Matrix Market coordinate file (real, general or symmetric).
/// Symmetric storage is expanded to full storage; duplicates are summed.
/// Malformed input throws std::runtime_error naming the offending line.
SparseMatrix read_matrix_market(const std::string& path);

/// Write coordinate-format Matrix Market (general, 1-based, shortest
/// round-trip decimal so read-back reproduces the values exactly).
void write_matrix_market(const SparseMatrix& A, const std::string& path);

// Small dense-vector helpers shared by the solvers.
double dot(const DenseVector& a, const DenseVector& b);
double norm2(const DenseVector& a);

}  // namespace stoprec

#endif  // STOPREC_SPARSE_HPP
