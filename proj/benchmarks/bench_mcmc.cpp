#include <benchmark/benchmark.h>

#include "stoprec/matgen.hpp"
#include "stoprec/mcmc.hpp"

using namespace stoprec;

static void BM_build_preconditioner(benchmark::State& state) {
    const SparseMatrix A = gen_laplacian2d(static_cast<index_t>(state.range(0)));
    const McmcParams params{1.0, 0.125, 0.125, SolverKind::GMRES};
    McmcFixedSettings fixed;
    fixed.seed = 1;
    const int threads = static_cast<int>(state.range(1));
    for (auto _ : state) {
        const PreconditionerBuildReport rep = build_preconditioner(A, params, fixed, threads);
        benchmark::DoNotOptimize(rep.P.nnz());
    }
    state.SetLabel(std::to_string(threads) + " threads");
}
BENCHMARK(BM_build_preconditioner)
    ->Args({32, 1})
    ->Args({32, 2})
    ->Args({64, 1})
    ->Args({64, 2})
    ->Unit(benchmark::kMillisecond);

static void BM_walk_budget_scaling(benchmark::State& state) {
    // Cost scaling in the stochastic-error budget epsilon (chain count).
    const SparseMatrix A = gen_laplacian2d(16);
    const double eps = 1.0 / static_cast<double>(state.range(0));
    McmcFixedSettings fixed;
    fixed.seed = 2;
    for (auto _ : state) {
        const PreconditionerBuildReport rep =
            build_preconditioner(A, McmcParams{1.0, eps, 0.125, SolverKind::GMRES}, fixed);
        benchmark::DoNotOptimize(rep.chains_per_row);
    }
}
BENCHMARK(BM_walk_budget_scaling)->Arg(2)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
