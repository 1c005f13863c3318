#include <doctest.h>

#include <stdexcept>
#include <tuple>
#include <algorithm>

#include <cmath>

#include "dense_oracle.hpp"
#include "stoprec/matgen.hpp"
#include "stoprec/mcmc.hpp"

using namespace stoprec;

namespace {

double frob_residual_PAhat_vs_I(const SparseMatrix& P, const SparseMatrix& Ahat) {
    const auto pd = oracle::from_sparse(P);
    const auto ad = oracle::from_sparse(Ahat);
    const std::size_t n = pd.n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < n; ++k) v += pd.at(i, k) * ad.at(k, j);
            const double target = i == j ? 1.0 : 0.0;
            s += (v - target) * (v - target);
        }
    return std::sqrt(s);
}

McmcFixedSettings no_fill_truncation(std::uint64_t seed) {
    McmcFixedSettings f;
    f.fill_factor_multiplier = 1e12;  // keep-everything budget
    f.seed = seed;
    return f;
}

}  // namespace

TEST_CASE("perturb") {
    const SparseMatrix A =
        SparseMatrix::from_triplets(2, 2, {{0, 0, 2.0}, {0, 1, 1.0}, {1, 1, 3.0}});
    const SparseMatrix same = perturb(A, 0.0);
    CHECK(same.values == A.values);

    const SparseMatrix Ahat = perturb(A, 1.0);
    CHECK(Ahat.at(0, 0) == 4.0);
    CHECK(Ahat.at(0, 1) == 1.0);
    CHECK(Ahat.at(1, 1) == 6.0);

    const SparseMatrix Z = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 0, 1.0}});
    CHECK_THROWS_WITH_AS(perturb(Z, 1.0), doctest::Contains("row 1"), std::invalid_argument);
}

TEST_CASE("perturb of the laplacian controls the contraction norm") {
    const SparseMatrix Ahat = perturb(gen_laplacian2d(16), 4.0);
    for (index_t i = 0; i < Ahat.nrows; ++i) CHECK(Ahat.at(i, i) == 20.0);
    const JacobiSplitting spl = splitting(Ahat);
    CHECK(norms(spl.T).inf_norm == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("splitting") {
    const SparseMatrix D = SparseMatrix::from_triplets(2, 2, {{0, 0, 5.0}, {1, 1, 2.0}});
    const JacobiSplitting sd = splitting(D);
    CHECK(sd.T.nnz() == 0);
    CHECK(sd.dinv[0] == 0.2);
    CHECK(sd.dinv[1] == 0.5);

    const SparseMatrix A =
        SparseMatrix::from_triplets(2, 2, {{0, 0, 4.0}, {0, 1, 1.0}, {1, 1, 6.0}});
    const JacobiSplitting sa = splitting(A);
    CHECK(sa.T.at(0, 1) == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(sa.T.at(0, 0) == 0.0);
    CHECK(sa.dinv[0] == 0.25);
    CHECK(sa.dinv[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("splitting reconstruction: Dhat (I - T) = Ahat to 1e-14 relative") {
    const SparseMatrix A = gen_random_diag_dominant(12, 0.4, 3);
    const JacobiSplitting spl = splitting(A);
    const auto td = oracle::from_sparse(spl.T);
    for (index_t i = 0; i < A.nrows; ++i) {
        const double dii = 1.0 / spl.dinv[i];
        for (index_t j = 0; j < A.ncols; ++j) {
            const double recon = dii * ((i == j ? 1.0 : 0.0) - td.at(i, j));
            const double truth = A.at(i, j);
            CHECK(std::abs(recon - truth) <= 1e-14 * std::max(1.0, std::abs(truth)));
        }
    }
}

TEST_CASE("chain budget formulas") {
    McmcFixedSettings fixed;
    CHECK(chain_budget(0.5, 0.5, 0.5, fixed).n_chains == 2);
    CHECK(chain_budget(1.0 / 16.0, 0.5, 0.5, fixed).n_chains == 117);
    CHECK(chain_budget(0.5, 1.0 / 16.0, 0.5, fixed).max_len == 4);

    // caps absorb extremes
    fixed.chain_count_cap = 50;
    CHECK(chain_budget(1e-3, 0.5, 0.5, fixed).n_chains == 50);
    fixed.walk_length_cap = 7;
    const ChainBudget degen = chain_budget(0.5, 0.5, 1.0, fixed);
    CHECK(degen.degenerate);
    CHECK(degen.max_len == 7);
    CHECK_FALSE(chain_budget(0.5, 0.5, 0.99, fixed).degenerate);
}

TEST_CASE("diagonal matrix: P equals Ahat^-1 exactly") {
    const SparseMatrix D = SparseMatrix::from_triplets(
        3, 3, {{0, 0, 2.0}, {1, 1, 4.0}, {2, 2, 8.0}});
    const PreconditionerBuildReport rep =
        build_preconditioner(D, McmcParams{0.0, 0.5, 0.5, SolverKind::GMRES},
                             no_fill_truncation(1));
    CHECK(rep.P.nnz() == 3);
    CHECK(rep.P.at(0, 0) == 0.5);
    CHECK(rep.P.at(1, 1) == 0.25);
    CHECK(rep.P.at(2, 2) == 0.125);
    CHECK(rep.spectral_bound == 0.0);
    CHECK_FALSE(rep.degenerate);
}

TEST_CASE("2x2 triangular case matches the closed-form inverse") {
    // Ahat = [[4,1],[0,6]] (A = [[2,1],[0,3]] with alpha = 1)
    const SparseMatrix A =
        SparseMatrix::from_triplets(2, 2, {{0, 0, 2.0}, {0, 1, 1.0}, {1, 1, 3.0}});
    const PreconditionerBuildReport rep = build_preconditioner(
        A, McmcParams{1.0, 1e-3, 1e-3, SolverKind::GMRES}, no_fill_truncation(5));
    CHECK(std::abs(rep.P.at(0, 0) - 0.25) <= 0.05);
    CHECK(std::abs(rep.P.at(0, 1) - (-1.0 / 24.0)) <= 0.05);
    CHECK(std::abs(rep.P.at(1, 1) - (1.0 / 6.0)) <= 0.05);
    CHECK(rep.P.at(1, 0) == 0.0);
}

TEST_CASE("seed determinism and thread independence (bitwise)") {
    const SparseMatrix A = gen_random_diag_dominant(24, 0.25, 11);
    const McmcParams params{0.5, 0.125, 0.125, SolverKind::GMRES};
    McmcFixedSettings fixed;
    fixed.seed = 99;
    const PreconditionerBuildReport serial = build_preconditioner(A, params, fixed, 1);
    const PreconditionerBuildReport threaded = build_preconditioner(A, params, fixed, 4);
    CHECK(serial.P.row_offsets == threaded.P.row_offsets);
    CHECK(serial.P.col_indices == threaded.P.col_indices);
    CHECK(serial.P.values == threaded.P.values);

    fixed.seed = 100;
    const PreconditionerBuildReport other = build_preconditioner(A, params, fixed, 1);
    CHECK(serial.P.values != other.P.values);
}

TEST_CASE("sparsity bound: nnz(P) <= fill * phi * n^2 + n") {
    const SparseMatrix A = gen_laplacian2d(12);
    McmcFixedSettings fixed;
    fixed.seed = 3;
    const PreconditionerBuildReport rep =
        build_preconditioner(A, McmcParams{1.0, 0.25, 0.125, SolverKind::GMRES}, fixed);
    const double bound = fixed.fill_factor_multiplier * A.fill_fraction() *
                             static_cast<double>(A.nrows) * static_cast<double>(A.nrows) +
                         static_cast<double>(A.nrows);
    CHECK(static_cast<double>(rep.P.nnz()) <= bound);
    // diagonal retained in every row
    for (index_t i = 0; i < rep.P.nrows; ++i) CHECK(rep.P.at(i, i) != 0.0);
}

TEST_CASE("degenerate flag set when ||T||_inf >= 1, build still returns") {
    const SparseMatrix A = gen_laplacian2d(6);  // interior rows: off-sum 4 = diag
    McmcFixedSettings fixed;
    fixed.seed = 1;
    fixed.walk_length_cap = 30;
    const PreconditionerBuildReport rep =
        build_preconditioner(A, McmcParams{0.0, 0.5, 0.5, SolverKind::GMRES}, fixed);
    CHECK(rep.degenerate);
    CHECK(rep.spectral_bound >= 1.0);
    CHECK(rep.max_walk_len == 30);
    CHECK(rep.P.nnz() > 0);
}

TEST_CASE("accuracy: ||P Ahat - I||_F small at tight budgets (dense oracle)") {
    const SparseMatrix A = gen_random_diag_dominant(16, 0.25, 1);
    const PreconditionerBuildReport rep = build_preconditioner(
        A, McmcParams{0.0, 1e-3, 1e-3, SolverKind::GMRES}, no_fill_truncation(1));
    const double res = frob_residual_PAhat_vs_I(rep.P, A);  // alpha = 0: Ahat = A
    MESSAGE("||P Ahat - I||_F = ", res);
    CHECK(res <= 0.5);
}

TEST_CASE("statistical error monotonicity over (eps, delta) halvings") {
    const SparseMatrix A = gen_random_diag_dominant(16, 0.25, 1);
    const double pairs[3][2] = {{0.5, 0.5}, {0.125, 0.125}, {1.0 / 32.0, 1.0 / 32.0}};
    std::vector<double> med;
    for (const auto& p : pairs) {
        std::vector<double> errs;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const PreconditionerBuildReport rep = build_preconditioner(
                A, McmcParams{0.0, p[0], p[1], SolverKind::GMRES}, no_fill_truncation(seed));
            errs.push_back(frob_residual_PAhat_vs_I(rep.P, A));
        }
        std::sort(errs.begin(), errs.end());
        med.push_back(errs[2]);
    }
    MESSAGE("medians: ", med[0], " ", med[1], " ", med[2]);
    CHECK(med[1] <= med[0]);
    CHECK(med[2] <= med[1]);
}

TEST_CASE("unbiasedness at desk scale: estimates within 3 SE plus truncation bound") {
    // A 4x4 diag-dominant matrix whose rows branch, so walks are genuinely
    // stochastic; estimate row sums over 1000 chains per row.
    const SparseMatrix A = gen_random_diag_dominant(4, 0.9, 21);
    const JacobiSplitting spl = splitting(A);
    const double t_inf = norms(spl.T).inf_norm;
    REQUIRE(t_inf < 1.0);

    McmcFixedSettings fixed = no_fill_truncation(17);
    // epsilon chosen so the chain budget lands on ~1000 chains
    const double eps = 0.6745 / std::sqrt(1000.0);
    const McmcParams params{0.0, eps, 1e-3, SolverKind::GMRES};
    const ChainBudget budget = chain_budget(eps, 1e-3, t_inf, fixed);
    CHECK(budget.n_chains == 1000);

    const PreconditionerBuildReport rep = build_preconditioner(A, params, fixed);
    const auto truth = oracle::inverse(oracle::from_sparse(A));

    // Truncation bias bound: ||T||^(L+1) / (1 - ||T||) scaled by max |dinv|.
    double dmax = 0.0;
    for (double d : spl.dinv) dmax = std::max(dmax, std::abs(d));
    const double tail =
        std::pow(t_inf, static_cast<double>(budget.max_len) + 1.0) / (1.0 - t_inf) * dmax;

    // SE proxy: entries of the inverse are O(dmax); weights are bounded by
    // prod of row sums <= 1, so per-chain variance is O(dmax^2). Use a
    // generous constant; the test guards against gross bias, not variance.
    const double se = 3.0 * dmax / std::sqrt(1000.0);
    for (index_t i = 0; i < 4; ++i)
        for (index_t j = 0; j < 4; ++j)
            CHECK(std::abs(rep.P.at(i, j) - truth.at(i, j)) <= 3.0 * se + tail + 1e-12);
}
