#include <doctest.h>

#include <stdexcept>
#include <tuple>
#include <algorithm>

#include <cmath>

#include "dense_oracle.hpp"
#include "stoprec/krylov.hpp"
#include "stoprec/matgen.hpp"
#include "stoprec/rng.hpp"

using namespace stoprec;

namespace {

SolverConfig cfg_for(SolverKind k, double tol = 1e-8) {
    SolverConfig c;
    c.solver = k;
    c.rel_tol = tol;
    return c;
}

}  // namespace

TEST_CASE("identity system converges in one iteration for every solver") {
    const SparseMatrix I = SparseMatrix::identity(5);
    const DenseVector b{1.0, -2.0, 3.0, 0.5, 4.0};
    for (SolverKind k : {SolverKind::CG, SolverKind::GMRES, SolverKind::BiCGStab}) {
        const SolveResult r = solve(I, b, nullptr, cfg_for(k));
        CHECK(r.converged);
        CHECK(r.iterations == 1);
        for (index_t i = 0; i < 5; ++i) CHECK(r.x[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
}

TEST_CASE("CG finite termination on diag(1,2,3,4)") {
    const SparseMatrix D = SparseMatrix::from_triplets(
        4, 4, {{0, 0, 1.0}, {1, 1, 2.0}, {2, 2, 3.0}, {3, 3, 4.0}});
    const SolveResult r = solve(D, {1.0, 1.0, 1.0, 1.0}, nullptr, cfg_for(SolverKind::CG));
    CHECK(r.converged);
    CHECK(r.iterations <= 4);
    CHECK(r.x[1] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("solution accuracy vs dense oracle on random diag-dominant systems") {
    for (int trial = 0; trial < 4; ++trial) {
        const index_t n = 20 + 15 * trial;
        const SparseMatrix A = gen_random_diag_dominant(n, 0.2, 50 + trial);
        const DenseVector b = spmv(A, DenseVector(n, 1.0));
        const auto xd = oracle::solve(oracle::from_sparse(A), b);
        for (SolverKind k : {SolverKind::GMRES, SolverKind::BiCGStab}) {
            const SolveResult r = solve(A, b, nullptr, cfg_for(k));
            REQUIRE(r.converged);
            double num = 0.0, den = 0.0;
            for (index_t i = 0; i < n; ++i) {
                num += (r.x[i] - xd[i]) * (r.x[i] - xd[i]);
                den += xd[i] * xd[i];
            }
            CHECK(std::sqrt(num / den) <= 100.0 * 1e-8);
        }
    }
}

TEST_CASE("identical inputs give bitwise identical results") {
    const SparseMatrix A = gen_laplacian2d(8);
    const DenseVector b = spmv(A, DenseVector(A.ncols, 1.0));
    const SolveResult r1 = solve(A, b, nullptr, cfg_for(SolverKind::GMRES));
    const SolveResult r2 = solve(A, b, nullptr, cfg_for(SolverKind::GMRES));
    CHECK(r1.iterations == r2.iterations);
    CHECK(r1.x == r2.x);
    CHECK(r1.final_rel_residual == r2.final_rel_residual);
}

TEST_CASE("P = I changes nothing in the iteration count") {
    const SparseMatrix A = gen_laplacian2d(8);
    const SparseMatrix I = SparseMatrix::identity(A.nrows);
    const DenseVector b = spmv(A, DenseVector(A.ncols, 1.0));
    for (SolverKind k : {SolverKind::CG, SolverKind::GMRES, SolverKind::BiCGStab}) {
        const SolveResult plain = solve(A, b, nullptr, cfg_for(k));
        const SolveResult pre = solve(A, b, &I, cfg_for(k));
        CHECK(plain.iterations == pre.iterations);
        CHECK(plain.converged == pre.converged);
    }
}

TEST_CASE("GMRES residual estimates are non-increasing within a restart cycle") {
    const SparseMatrix A = gen_advdiff2d(12, 5.0);
    const DenseVector b = spmv(A, DenseVector(A.ncols, 1.0));
    SolverConfig cfg = cfg_for(SolverKind::GMRES, 1e-10);
    cfg.gmres_restart = 30;
    const SolveResult r = solve(A, b, nullptr, cfg);
    REQUIRE(r.converged);
    for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
        const bool new_cycle = i % 30 == 0;
        if (!new_cycle) CHECK(r.residual_history[i] <= r.residual_history[i - 1] * (1 + 1e-12));
    }
}

TEST_CASE("CG flags indefinite operators instead of looping") {
    // diag(1, -1) is symmetric indefinite.
    const SparseMatrix A = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, -1.0}});
    const SolveResult r = solve(A, {1.0, 1.0}, nullptr, cfg_for(SolverKind::CG));
    CHECK_FALSE(r.converged);
    CHECK(r.status == SolveStatus::Breakdown);
    CHECK(r.detail == "indefinite_operator");
}

TEST_CASE("rhs of zeros returns x = 0 and zero residual") {
    const SparseMatrix A = gen_laplacian2d(4);
    const SolveResult r = solve(A, DenseVector(A.nrows, 0.0), nullptr, cfg_for(SolverKind::GMRES));
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.final_rel_residual == 0.0);
}

TEST_CASE("performance metric") {
    CHECK(performance_metric(120, 160) == doctest::Approx(0.75));
    CHECK(performance_metric(7, 7) == 1.0);
    CHECK_THROWS_AS(performance_metric(5, 0), std::invalid_argument);
}

TEST_CASE("non-convergence within max_iters is reported, not thrown") {
    const SparseMatrix A = gen_laplacian2d(16);
    SolverConfig cfg = cfg_for(SolverKind::GMRES);
    cfg.max_iters = 3;
    const SolveResult r = solve(A, spmv(A, DenseVector(A.ncols, 1.0)), nullptr, cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.status == SolveStatus::MaxIterations);
    CHECK(r.iterations == 3);
}

TEST_SUITE("slow") {

#ifndef STOPREC_GOLDEN_LAP32_GMRES
#define STOPREC_GOLDEN_LAP32_GMRES 61  // frozen from the recorded run below
#endif

// Deterministic baseline, frozen from a run of this binary. The algorithm is
// sequential IEEE arithmetic, so the count is stable for a fixed build.
TEST_CASE("frozen golden baseline: GMRES on laplacian g=32") {
    const SparseMatrix A = gen_laplacian2d(32);
    const DenseVector b = spmv(A, DenseVector(A.ncols, 1.0));
    const SolveResult r1 = solve(A, b, nullptr, cfg_for(SolverKind::GMRES));
    const SolveResult r2 = solve(A, b, nullptr, cfg_for(SolverKind::GMRES));
    REQUIRE(r1.converged);
    CHECK(r1.iterations == r2.iterations);
    MESSAGE("baseline iterations N0 = ", r1.iterations);
    CHECK(r1.iterations == STOPREC_GOLDEN_LAP32_GMRES);
}

}  // TEST_SUITE("slow")
