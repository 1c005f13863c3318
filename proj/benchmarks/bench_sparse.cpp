#include <benchmark/benchmark.h>

#include "stoprec/krylov.hpp"
#include "stoprec/matgen.hpp"

using namespace stoprec;

static void BM_spmv_laplacian(benchmark::State& state) {
    const SparseMatrix A = gen_laplacian2d(static_cast<index_t>(state.range(0)));
    DenseVector x(A.ncols, 1.0), y(A.nrows);
    for (auto _ : state) {
        spmv(A, x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(A.nnz()));
}
BENCHMARK(BM_spmv_laplacian)->Arg(32)->Arg(64)->Arg(128);

static void BM_transpose(benchmark::State& state) {
    const SparseMatrix A = gen_advdiff2d(static_cast<index_t>(state.range(0)), 10.0);
    for (auto _ : state) {
        SparseMatrix At = transpose(A);
        benchmark::DoNotOptimize(At.values.data());
    }
}
BENCHMARK(BM_transpose)->Arg(32)->Arg(64);

static void BM_gmres_solve(benchmark::State& state) {
    const SparseMatrix A = gen_laplacian2d(static_cast<index_t>(state.range(0)));
    const DenseVector b = spmv(A, DenseVector(A.ncols, 1.0));
    SolverConfig cfg;
    cfg.rel_tol = 1e-8;
    for (auto _ : state) {
        const SolveResult r = solve(A, b, nullptr, cfg);
        benchmark::DoNotOptimize(r.iterations);
    }
}
BENCHMARK(BM_gmres_solve)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
