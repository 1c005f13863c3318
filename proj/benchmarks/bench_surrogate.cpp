#include <benchmark/benchmark.h>

#include "stoprec/acquisition.hpp"
#include "stoprec/matgen.hpp"
#include "stoprec/surrogate.hpp"

using namespace stoprec;

namespace {

SurrogateNet reference_net() {
    SurrogateConfig cfg;
    cfg.dropout = 0.0;
    cfg.seed = 3;
    return SurrogateNet::init(cfg);
}

}  // namespace

static void BM_forward(benchmark::State& state) {
    const SurrogateNet net = reference_net();
    const SparseMatrix A = gen_laplacian2d(static_cast<index_t>(state.range(0)));
    const PreparedGraph pg = prepare_graph(build_graph(A), net.st_node);
    const std::vector<double> xa(kMatrixFeatureDim, 0.1);
    const std::vector<double> xm(kParamEncodingDim, -0.2);
    for (auto _ : state) {
        const Prediction p = forward(net, pg, xa, xm);
        benchmark::DoNotOptimize(p.mu_hat);
    }
}
BENCHMARK(BM_forward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_ei_eval_with_context(benchmark::State& state) {
    // The acquisition hot path: x_M branch + fusion + heads only.
    const SurrogateNet net = reference_net();
    const SparseMatrix A = gen_laplacian2d(32);
    const PreparedGraph pg = prepare_graph(build_graph(A), net.st_node);
    const std::vector<double> xa(kMatrixFeatureDim, 0.1);
    const GraphContext ctx = make_context(net, pg, xa);
    const std::vector<double> xm(kParamEncodingDim, -0.2);
    for (auto _ : state) {
        const XmSensitivity s = xm_gradient(net, ctx, xm);
        benchmark::DoNotOptimize(s.mu);
    }
}
BENCHMARK(BM_ei_eval_with_context);

static void BM_propose_batch(benchmark::State& state) {
    const SurrogateNet net = reference_net();
    const SparseMatrix A = gen_laplacian2d(16);
    const MatrixGraph g = build_graph(A);
    const auto xa = matrix_features(A).to_vector();
    AcquisitionConfig cfg;
    cfg.restarts = 8;
    cfg.seed = 4;
    for (auto _ : state) {
        const auto proposals = propose_batch(net, g, xa, 1.0, static_cast<int>(state.range(0)),
                                             cfg, SolverKind::GMRES);
        benchmark::DoNotOptimize(proposals.size());
    }
}
BENCHMARK(BM_propose_batch)->Arg(4)->Arg(32)->Unit(benchmark::kMillisecond);
