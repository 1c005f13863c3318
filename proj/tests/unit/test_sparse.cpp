#include <doctest.h>

#include <stdexcept>
#include <tuple>
#include <algorithm>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dense_oracle.hpp"
#include "stoprec/matgen.hpp"
#include "stoprec/rng.hpp"
#include "stoprec/sparse.hpp"

using namespace stoprec;

namespace {

SparseMatrix two_by_two() {
    // [[2,1],[0,3]]
    return SparseMatrix::from_triplets(2, 2, {{0, 0, 2.0}, {0, 1, 1.0}, {1, 1, 3.0}});
}

void check_canonical(const SparseMatrix& A) {
    REQUIRE(A.row_offsets.size() == A.nrows + 1);
    REQUIRE(A.row_offsets.front() == 0);
    REQUIRE(A.row_offsets.back() == A.nnz());
    for (index_t i = 0; i < A.nrows; ++i) {
        REQUIRE(A.row_offsets[i] <= A.row_offsets[i + 1]);
        for (index_t k = A.row_offsets[i]; k < A.row_offsets[i + 1]; ++k) {
            REQUIRE(A.col_indices[k] < A.ncols);
            if (k > A.row_offsets[i]) REQUIRE(A.col_indices[k - 1] < A.col_indices[k]);
            REQUIRE(A.values[k] != 0.0);
        }
    }
}

SparseMatrix random_sparse(index_t n, double density, std::uint64_t seed) {
    std::vector<Triplet> t;
    for (index_t i = 0; i < n; ++i)
        for (index_t j = 0; j < n; ++j)
            if (rng::uniform01(seed, rng::kTestOracle, i, j, 0) < density)
                t.push_back({i, j, rng::uniform(seed, rng::kTestOracle, i, j, 1, -2.0, 2.0)});
    return SparseMatrix::from_triplets(n, n, std::move(t));
}

std::filesystem::path tmp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("spmv identity and 2x2") {
    const SparseMatrix I3 = SparseMatrix::identity(3);
    CHECK(spmv(I3, {1.0, 2.0, 3.0}) == DenseVector{1.0, 2.0, 3.0});

    const SparseMatrix A = two_by_two();
    CHECK(spmv(A, {1.0, 1.0}) == DenseVector{3.0, 3.0});
}

TEST_CASE("spmv dimension mismatch throws") {
    CHECK_THROWS_AS(spmv(two_by_two(), DenseVector{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("spmv laplacian times ones: interior rows vanish") {
    const SparseMatrix A = gen_laplacian2d(16);
    REQUIRE(A.nrows == 225);
    const DenseVector y = spmv(A, DenseVector(225, 1.0));
    const auto d = oracle::from_sparse(A);
    const auto yd = oracle::matvec(d, std::vector<double>(225, 1.0));
    const index_t m = 15;
    bool boundary_nonzero = true, interior_zero = true;
    for (index_t r = 0; r < m; ++r)
        for (index_t c = 0; c < m; ++c) {
            const bool interior = r > 0 && r + 1 < m && c > 0 && c + 1 < m;
            if (interior && y[r * m + c] != 0.0) interior_zero = false;
            if (!interior && y[r * m + c] == 0.0) boundary_nonzero = false;
        }
    CHECK(interior_zero);
    CHECK(boundary_nonzero);
    for (index_t i = 0; i < 225; ++i) CHECK(y[i] == doctest::Approx(yd[i]).epsilon(1e-14));
}

TEST_CASE("spmv matches dense oracle on random matrices up to 64x64") {
    for (index_t n : {5, 17, 64}) {
        const SparseMatrix A = random_sparse(n, 0.15, 1000 + n);
        const auto d = oracle::from_sparse(A);
        DenseVector x(n);
        for (index_t i = 0; i < n; ++i)
            x[i] = rng::uniform(99, rng::kTestOracle, i, 7, 7, -1.0, 1.0);
        const DenseVector y = spmv(A, x);
        const auto yd = oracle::matvec(d, x);
        for (index_t i = 0; i < n; ++i) CHECK(std::abs(y[i] - yd[i]) <= 1e-12);
    }
}

TEST_CASE("transpose basics") {
    const SparseMatrix A = two_by_two();
    const SparseMatrix At = transpose(A);
    CHECK(At.at(0, 0) == 2.0);
    CHECK(At.at(1, 0) == 1.0);
    CHECK(At.at(1, 1) == 3.0);
    CHECK(At.at(0, 1) == 0.0);
    check_canonical(At);

    const SparseMatrix L = gen_laplacian2d(8);
    const SparseMatrix Lt = transpose(L);
    CHECK(Lt.values == L.values);  // symmetric: bitwise-equal values
    CHECK(Lt.col_indices == L.col_indices);
}

TEST_CASE("transpose round-trip is exact on random 50x50") {
    const SparseMatrix A = random_sparse(50, 0.05, 4242);
    const SparseMatrix Att = transpose(transpose(A));
    CHECK(Att.row_offsets == A.row_offsets);
    CHECK(Att.col_indices == A.col_indices);
    CHECK(Att.values == A.values);
}

TEST_CASE("norms") {
    const MatrixNorms i3 = norms(SparseMatrix::identity(3));
    CHECK(i3.one_norm == 1.0);
    CHECK(i3.inf_norm == 1.0);
    CHECK(i3.frob_norm == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));

    const MatrixNorms m = norms(two_by_two());
    CHECK(m.one_norm == 4.0);
    CHECK(m.inf_norm == 3.0);
    CHECK(m.frob_norm == doctest::Approx(std::sqrt(14.0)).epsilon(1e-15));

    CHECK(norms(gen_laplacian2d(32)).inf_norm == 8.0);
}

TEST_CASE("from_triplets sums duplicates and drops zeros") {
    const SparseMatrix A = SparseMatrix::from_triplets(
        2, 2, {{0, 0, 1.0}, {0, 0, 1.0}, {0, 1, 5.0}, {0, 1, -5.0}, {1, 1, 0.0}});
    CHECK(A.nnz() == 1);
    CHECK(A.at(0, 0) == 2.0);
    check_canonical(A);
}

TEST_CASE("matrix market read: general") {
    const auto path = tmp_file("stoprec_mm_general.mtx");
    {
        std::ofstream out(path);
        out << "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 3\n"
               "1 1 2.0\n1 2 1.0\n2 2 3.0\n";
    }
    const SparseMatrix A = read_matrix_market(path.string());
    CHECK(A.nrows == 2);
    CHECK(A.at(0, 0) == 2.0);
    CHECK(A.at(0, 1) == 1.0);
    CHECK(A.at(1, 1) == 3.0);
}

TEST_CASE("matrix market read: symmetric lower triangle expands") {
    const auto path = tmp_file("stoprec_mm_sym.mtx");
    {
        std::ofstream out(path);
        out << "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n"
               "1 1 2.0\n2 1 -1.0\n2 2 2.0\n3 3 2.0\n";
    }
    const SparseMatrix A = read_matrix_market(path.string());
    CHECK(A.at(0, 1) == -1.0);
    CHECK(A.at(1, 0) == -1.0);
    CHECK(A.nnz() == 5);
    check_canonical(A);
}

TEST_CASE("matrix market parse errors carry line numbers") {
    auto write_and_read = [](const std::string& name, const std::string& body) {
        const auto path = tmp_file(name);
        std::ofstream(path) << body;
        return read_matrix_market(path.string());
    };
    CHECK_THROWS_WITH_AS(write_and_read("stoprec_mm_bad1.mtx", "%%NotMatrixMarket\n1 1 0\n"),
                         doctest::Contains(":1:"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        write_and_read("stoprec_mm_bad2.mtx",
                       "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n"),
        doctest::Contains("not supported"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        write_and_read("stoprec_mm_bad3.mtx",
                       "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n"),
        doctest::Contains(":3:"), std::runtime_error);
}

TEST_CASE("matrix market round-trip reproduces the laplacian exactly") {
    const SparseMatrix A = gen_laplacian2d(16);
    const auto path = tmp_file("stoprec_mm_roundtrip.mtx");
    write_matrix_market(A, path.string());
    const SparseMatrix B = read_matrix_market(path.string());
    CHECK(B.row_offsets == A.row_offsets);
    CHECK(B.col_indices == A.col_indices);
    CHECK(B.values == A.values);
}

TEST_CASE("matrix market round-trip on awkward values") {
    const SparseMatrix A = SparseMatrix::from_triplets(
        2, 2, {{0, 0, 1.0 / 3.0}, {0, 1, -1.2345678901234567e-9}, {1, 1, 3.0000000000000004}});
    const auto path = tmp_file("stoprec_mm_values.mtx");
    write_matrix_market(A, path.string());
    const SparseMatrix B = read_matrix_market(path.string());
    CHECK(B.values == A.values);
}
