#include "stoprec/sparse.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stoprec {

double SparseMatrix::fill_fraction() const {
    if (nrows == 0 || ncols == 0) return 0.0;
    return static_cast<double>(nnz()) /
           (static_cast<double>(nrows) * static_cast<double>(ncols));
}

double SparseMatrix::at(index_t i, index_t j) const {
    const auto begin = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
    const auto end = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
    const auto it = std::lower_bound(begin, end, j);
    if (it == end || *it != j) return 0.0;
    return values[static_cast<index_t>(it - col_indices.begin())];
}

SparseMatrix SparseMatrix::from_triplets(index_t nrows, index_t ncols,
                                         std::vector<Triplet> entries) {
    for (const Triplet& t : entries) {
        if (t.row >= nrows || t.col >= ncols)
            throw std::invalid_argument("from_triplets: entry (" + std::to_string(t.row) +
                                        "," + std::to_string(t.col) + ") out of bounds");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseMatrix A;
    A.nrows = nrows;
    A.ncols = ncols;
    A.row_offsets.assign(nrows + 1, 0);
    A.col_indices.reserve(entries.size());
    A.values.reserve(entries.size());

    index_t k = 0;
    for (index_t row = 0; row < nrows; ++row) {
        while (k < entries.size() && entries[k].row == row) {
            double v = entries[k].value;
            const index_t col = entries[k].col;
            ++k;
            while (k < entries.size() && entries[k].row == row && entries[k].col == col) {
                v += entries[k].value;  // duplicates sum
                ++k;
            }
            if (v != 0.0) {
                A.col_indices.push_back(col);
                A.values.push_back(v);
            }
        }
        A.row_offsets[row + 1] = A.col_indices.size();
    }
    return A;
}

SparseMatrix SparseMatrix::from_csr(index_t nrows, index_t ncols,
                                    std::vector<index_t> row_offsets,
                                    std::vector<index_t> col_indices,
                                    std::vector<double> values) {
    if (row_offsets.size() != nrows + 1 || row_offsets.front() != 0 ||
        row_offsets.back() != values.size() || col_indices.size() != values.size())
        throw std::invalid_argument("from_csr: inconsistent CSR arrays");
    for (index_t i = 0; i < nrows; ++i) {
        if (row_offsets[i] > row_offsets[i + 1])
            throw std::invalid_argument("from_csr: row_offsets not non-decreasing");
        for (index_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
            if (col_indices[k] >= ncols)
                throw std::invalid_argument("from_csr: column index out of range");
            if (k > row_offsets[i] && col_indices[k - 1] >= col_indices[k])
                throw std::invalid_argument("from_csr: columns not strictly increasing in row " +
                                            std::to_string(i));
            if (values[k] == 0.0)
                throw std::invalid_argument("from_csr: explicit zero stored");
        }
    }
    SparseMatrix A;
    A.nrows = nrows;
    A.ncols = ncols;
    A.row_offsets = std::move(row_offsets);
    A.col_indices = std::move(col_indices);
    A.values = std::move(values);
    return A;
}

SparseMatrix SparseMatrix::identity(index_t n) {
    SparseMatrix A;
    A.nrows = A.ncols = n;
    A.row_offsets.resize(n + 1);
    A.col_indices.resize(n);
    A.values.assign(n, 1.0);
    for (index_t i = 0; i < n; ++i) {
        A.row_offsets[i] = i;
        A.col_indices[i] = i;
    }
    A.row_offsets[n] = n;
    return A;
}

void spmv(const SparseMatrix& A, const double* x, double* y) {
    for (index_t i = 0; i < A.nrows; ++i) {
        double sum = 0.0;
        for (index_t k = A.row_offsets[i]; k < A.row_offsets[i + 1]; ++k)
            sum += A.values[k] * x[A.col_indices[k]];
        y[i] = sum;
    }
}

DenseVector spmv(const SparseMatrix& A, const DenseVector& x) {
    if (x.size() != A.ncols)
        throw std::invalid_argument("spmv: dimension mismatch (ncols=" +
                                    std::to_string(A.ncols) + ", len(x)=" +
                                    std::to_string(x.size()) + ")");
    DenseVector y(A.nrows);
    spmv(A, x.data(), y.data());
    return y;
}

SparseMatrix transpose(const SparseMatrix& A) {
    SparseMatrix B;
    B.nrows = A.ncols;
    B.ncols = A.nrows;
    B.row_offsets.assign(B.nrows + 1, 0);
    B.col_indices.resize(A.nnz());
    B.values.resize(A.nnz());

    for (index_t k = 0; k < A.nnz(); ++k) B.row_offsets[A.col_indices[k] + 1]++;
    for (index_t i = 0; i < B.nrows; ++i) B.row_offsets[i + 1] += B.row_offsets[i];

    std::vector<index_t> next(B.row_offsets.begin(), B.row_offsets.end() - 1);
    for (index_t i = 0; i < A.nrows; ++i) {
        for (index_t k = A.row_offsets[i]; k < A.row_offsets[i + 1]; ++k) {
            const index_t pos = next[A.col_indices[k]]++;
            B.col_indices[pos] = i;  // rows visited ascending, so columns stay sorted
            B.values[pos] = A.values[k];
        }
    }
    return B;
}

MatrixNorms norms(const SparseMatrix& A) {
    MatrixNorms out;
    std::vector<double> col_sums(A.ncols, 0.0);
    double frob_sq = 0.0;
    for (index_t i = 0; i < A.nrows; ++i) {
        double row_sum = 0.0;
        for (index_t k = A.row_offsets[i]; k < A.row_offsets[i + 1]; ++k) {
            const double a = std::abs(A.values[k]);
            row_sum += a;
            col_sums[A.col_indices[k]] += a;
            frob_sq += A.values[k] * A.values[k];
        }
        out.inf_norm = std::max(out.inf_norm, row_sum);
    }
    for (double c : col_sums) out.one_norm = std::max(out.one_norm, c);
    out.frob_norm = std::sqrt(frob_sq);
    return out;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

SparseMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");

    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
    ++line_no;
    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket")
        parse_fail(path, line_no, "missing %%MatrixMarket banner");
    if (lower(object) != "matrix" || lower(format) != "coordinate")
        parse_fail(path, line_no, "only 'matrix coordinate' files are supported");
    if (lower(field) != "real")
        parse_fail(path, line_no, "field '" + field + "' not supported (real only)");
    const std::string sym = lower(symmetry);
    if (sym != "general" && sym != "symmetric")
        parse_fail(path, line_no, "symmetry '" + symmetry + "' not supported");

    // size line (comments may precede it)
    index_t nrows = 0, ncols = 0;
    std::size_t declared_nnz = 0;
    for (;;) {
        if (!std::getline(in, line)) parse_fail(path, line_no + 1, "missing size line");
        ++line_no;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream ss(line);
        long long r = -1, c = -1, z = -1;
        if (!(ss >> r >> c >> z) || r < 0 || c < 0 || z < 0)
            parse_fail(path, line_no, "bad size line '" + line + "'");
        nrows = static_cast<index_t>(r);
        ncols = static_cast<index_t>(c);
        declared_nnz = static_cast<std::size_t>(z);
        break;
    }

    std::vector<Triplet> entries;
    entries.reserve(sym == "symmetric" ? 2 * declared_nnz : declared_nnz);
    std::size_t read_count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream ss(line);
        long long r = 0, c = 0;
        double v = 0.0;
        if (!(ss >> r >> c >> v))
            parse_fail(path, line_no, "expected 'row col value', got '" + line + "'");
        if (r < 1 || c < 1 || static_cast<index_t>(r) > nrows || static_cast<index_t>(c) > ncols)
            parse_fail(path, line_no, "index (" + std::to_string(r) + "," + std::to_string(c) +
                                          ") out of bounds for " + std::to_string(nrows) + "x" +
                                          std::to_string(ncols));
        const index_t i = static_cast<index_t>(r - 1);
        const index_t j = static_cast<index_t>(c - 1);
        entries.push_back({i, j, v});
        if (sym == "symmetric" && i != j) entries.push_back({j, i, v});
        ++read_count;
    }
    if (read_count != declared_nnz)
        parse_fail(path, line_no, "entry count " + std::to_string(read_count) +
                                      " does not match declared " + std::to_string(declared_nnz));
    return SparseMatrix::from_triplets(nrows, ncols, std::move(entries));
}

void write_matrix_market(const SparseMatrix& A, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << A.nrows << " " << A.ncols << " " << A.nnz() << "\n";
    char buf[64];
    for (index_t i = 0; i < A.nrows; ++i) {
        for (index_t k = A.row_offsets[i]; k < A.row_offsets[i + 1]; ++k) {
            const auto res = std::to_chars(buf, buf + sizeof(buf), A.values[k]);
            out << (i + 1) << " " << (A.col_indices[k] + 1) << " ";
            out.write(buf, res.ptr - buf);
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

double dot(const DenseVector& a, const DenseVector& b) {
    double s = 0.0;
    for (index_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const DenseVector& a) { return std::sqrt(dot(a, a)); }

}  // namespace stoprec
