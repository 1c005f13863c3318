#include "stoprec/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stoprec/rng.hpp"
#include "stoprec/stats.hpp"

namespace stoprec {

const MatrixFeatures& EvalContext::features() {
    if (!features_) features_ = matrix_features(*A);
    return *features_;
}

index_t EvalContext::baseline(SolverKind solver) {
    auto it = baseline_steps.find(solver);
    if (it != baseline_steps.end()) return it->second;
    SolverConfig cfg = solver_cfg;
    cfg.solver = solver;
    const DenseVector b = spmv(*A, DenseVector(A->ncols, 1.0));  // b = A * ones
    const SolveResult res = solve(*A, b, nullptr, cfg);
    const index_t steps =
        res.converged ? res.iterations : (cfg.max_iters > 0 ? cfg.max_iters : 10 * A->nrows);
    baseline_steps.emplace(solver, steps);
    return steps;
}

LabeledSample evaluate(EvalContext& ctx, const McmcParams& xm) {
    if (ctx.replicates < 2) throw std::invalid_argument("evaluate: replicates must be >= 2");

    LabeledSample out;
    out.matrix_id = ctx.matrix_id;
    out.matrix_path = ctx.matrix_path;
    out.features = ctx.features();
    out.xm = xm;
    out.seed = ctx.fixed.seed;

    SolverConfig cfg = ctx.solver_cfg;
    cfg.solver = xm.solver;
    const index_t nopre = ctx.baseline(xm.solver);
    index_t max_steps = cfg.max_iters > 0 ? cfg.max_iters : 10 * ctx.A->nrows;
    if (ctx.clamp_multiplier > 0.0) {
        const index_t budget = static_cast<index_t>(
            ctx.clamp_multiplier * static_cast<double>(nopre) + 0.5);
        max_steps = std::min(max_steps, std::max<index_t>(1, budget));
        cfg.max_iters = max_steps;
    }
    const DenseVector b = spmv(*ctx.A, DenseVector(ctx.A->ncols, 1.0));

    for (int r = 0; r < ctx.replicates; ++r) {
        McmcFixedSettings fixed = ctx.fixed;
        fixed.seed = ctx.fixed.seed + static_cast<std::uint64_t>(r);
        try {
            const PreconditionerBuildReport rep =
                build_preconditioner(*ctx.A, xm, fixed, ctx.threads);
            out.degenerate = out.degenerate || rep.degenerate;
            const SolveResult res = solve(*ctx.A, b, &rep.P, cfg);
            index_t steps = res.iterations;
            if (!res.converged) {
                steps = max_steps;  // pessimistic clamp
                out.nonconverged = true;
            }
            out.replicate_ys.push_back(performance_metric(steps, nopre));
        } catch (const std::exception&) {
            out.invalid = true;
            return out;
        }
    }
    out.y_mean = stats::mean(out.replicate_ys);
    out.y_std = stats::sample_std(out.replicate_ys);
    return out;
}

std::vector<LabeledSample> grid_search(EvalContext& ctx, const GridSpec& grid,
                                       SolverKind solver) {
    if (grid.alphas.empty() || grid.epsilons.empty() || grid.deltas.empty())
        throw std::invalid_argument("grid_search: empty grid");
    std::vector<LabeledSample> out;
    out.reserve(grid.alphas.size() * grid.epsilons.size() * grid.deltas.size());
    const std::uint64_t base_seed = ctx.fixed.seed;
    std::uint64_t ordinal = 0;
    for (double alpha : grid.alphas)
        for (double eps : grid.epsilons)
            for (double delta : grid.deltas) {
                McmcParams xm{alpha, eps, delta, solver};
                ctx.fixed.seed = base_seed + 10000 * ordinal++;
                LabeledSample s = evaluate(ctx, xm);
                s.strategy = "grid";
                out.push_back(std::move(s));
            }
    ctx.fixed.seed = base_seed;
    return out;
}

std::vector<LabeledSample> random_search(EvalContext& ctx, int n_points,
                                         const AcquisitionConfig& bounds, SolverKind solver,
                                         std::uint64_t seed) {
    if (n_points < 1) throw std::invalid_argument("random_search: n_points must be >= 1");
    std::vector<LabeledSample> out;
    out.reserve(n_points);
    const std::uint64_t base_seed = ctx.fixed.seed;
    for (int p = 0; p < n_points; ++p) {
        McmcParams xm;
        xm.alpha = rng::uniform(seed, rng::kRandomSearch, static_cast<std::uint32_t>(p), 0, 0,
                                bounds.bounds[0][0], bounds.bounds[0][1]);
        xm.epsilon = std::exp(rng::uniform(seed, rng::kRandomSearch,
                                           static_cast<std::uint32_t>(p), 0, 1,
                                           bounds.bounds[1][0], bounds.bounds[1][1]));
        xm.delta = std::exp(rng::uniform(seed, rng::kRandomSearch, static_cast<std::uint32_t>(p),
                                         0, 2, bounds.bounds[2][0], bounds.bounds[2][1]));
        xm.solver = solver;
        ctx.fixed.seed = base_seed + 10000 * static_cast<std::uint64_t>(p);
        LabeledSample s = evaluate(ctx, xm);
        s.strategy = "random";
        out.push_back(std::move(s));
    }
    ctx.fixed.seed = base_seed;
    return out;
}

std::optional<BestRecord> best_by_median(const std::vector<LabeledSample>& samples,
                                         const std::string& matrix_id) {
    std::optional<BestRecord> best;
    for (const LabeledSample& s : samples) {
        if (s.matrix_id != matrix_id || s.invalid || s.replicate_ys.empty()) continue;
        const double med = stats::median(s.replicate_ys);
        if (!best || med < best->median_y) best = BestRecord{s.xm, med};
    }
    return best;
}

std::vector<TrainSample> to_train_samples(
    const std::vector<LabeledSample>& data,
    const std::map<std::string, const MatrixGraph*>& graphs,
    const std::map<std::string, std::vector<double>>& features) {
    std::vector<TrainSample> out;
    out.reserve(data.size());
    for (const LabeledSample& s : data) {
        if (s.invalid) continue;
        const auto git = graphs.find(s.matrix_id);
        const auto fit = features.find(s.matrix_id);
        if (git == graphs.end() || fit == features.end())
            throw std::invalid_argument("to_train_samples: no graph/features for matrix '" +
                                        s.matrix_id + "'");
        TrainSample t;
        t.graph = git->second;
        t.matrix_id = s.matrix_id;
        t.xa = fit->second;
        t.xm_enc = encode_params(s.xm);
        t.y_mean = s.y_mean;
        t.y_std = s.y_std;
        out.push_back(std::move(t));
    }
    return out;
}

BoResult bo_loop(std::vector<TuneMatrix>& matrices, const std::vector<LabeledSample>& seed_data,
                 const std::map<std::string, const MatrixGraph*>& seed_graphs,
                 const std::map<std::string, std::vector<double>>& seed_features,
                 const SurrogateNet& model, const BoConfig& cfg) {
    if (cfg.budget < 0) throw std::invalid_argument("bo_loop: budget must be >= 0");
    if (cfg.batch < 1) throw std::invalid_argument("bo_loop: batch must be >= 1");

    BoResult result;
    result.net = model;
    result.run.budget = cfg.budget;
    result.run.batch = cfg.batch;
    result.run.strategy = "bo";
    result.run.xi = cfg.xi;
    result.run.seed = cfg.seed;

    std::vector<LabeledSample> dataset = seed_data;  // append-only within the run
    auto graphs = seed_graphs;
    auto features = seed_features;
    for (const TuneMatrix& m : matrices) {
        graphs.emplace(m.eval->matrix_id, m.graph);
        features.emplace(m.eval->matrix_id, m.xa);
    }

    int added = 0;
    int round = 0;
    std::uint64_t eval_ordinal = 0;
    while (added < cfg.budget) {
        bool any_valid = false;
        for (TuneMatrix& m : matrices) {
            if (added >= cfg.budget) break;
            const int k = std::min(cfg.batch, cfg.budget - added);
            const auto best = best_by_median(dataset, m.eval->matrix_id);
            const double y_min = best ? best->median_y : 1.0;

            AcquisitionConfig acq = cfg.acquisition;
            acq.xi = cfg.xi;
            acq.seed = cfg.seed + 7919 * static_cast<std::uint64_t>(round);
            const std::vector<McmcParams> proposals =
                propose_batch(result.net, *m.graph, m.xa, y_min, k, acq, cfg.solver);

            TuningRound tr;
            tr.round = round;
            tr.matrix_id = m.eval->matrix_id;
            tr.proposals = proposals;
            result.run.rounds.push_back(tr);

            const std::uint64_t base_seed = m.eval->fixed.seed;
            for (const McmcParams& xm : proposals) {
                m.eval->fixed.seed = base_seed + 1000003 * (1 + eval_ordinal++);
                LabeledSample s = evaluate(*m.eval, xm);
                s.strategy = "bo";
                s.round = round;
                dataset.push_back(s);
                result.new_samples.push_back(s);
                ++added;
                ++result.run.evaluations;
                any_valid = any_valid || !s.invalid;
            }
            m.eval->fixed.seed = base_seed;

            if (const auto nb = best_by_median(dataset, m.eval->matrix_id))
                result.run.best_so_far[m.eval->matrix_id] = *nb;
        }
        if (!any_valid)
            std::fprintf(stderr, "stoprec: bo_loop round %d produced no valid samples\n", round);
        // Full retrain from fresh initialization, same config.
        result.net = SurrogateNet::init(model.config);
        const std::vector<TrainSample> ts = to_train_samples(dataset, graphs, features);
        train(result.net, ts);
        ++round;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dataset JSONL
// ---------------------------------------------------------------------------

namespace {

nlohmann::json sample_to_json(const LabeledSample& s) {
    return {{"matrix_id", s.matrix_id},
            {"matrix_path", s.matrix_path},
            {"features",
             {{"one_norm", s.features.one_norm},
              {"inf_norm", s.features.inf_norm},
              {"frob_norm", s.features.frob_norm},
              {"sparsity", s.features.sparsity},
              {"symmetric_flag", s.features.symmetric_flag},
              {"asymmetry_ratio", s.features.asymmetry_ratio},
              {"dimension_log", s.features.dimension_log}}},
            {"alpha", s.xm.alpha},
            {"eps", s.xm.epsilon},
            {"delta", s.xm.delta},
            {"solver", to_string(s.xm.solver)},
            {"y_mean", s.y_mean},
            {"y_std", s.y_std},
            {"replicate_ys", s.replicate_ys},
            {"nonconverged", s.nonconverged},
            {"degenerate", s.degenerate},
            {"invalid", s.invalid},
            {"strategy", s.strategy},
            {"round", s.round},
            {"seed", s.seed}};
}

LabeledSample sample_from_json(const nlohmann::json& j) {
    LabeledSample s;
    s.matrix_id = j.at("matrix_id").get<std::string>();
    s.matrix_path = j.value("matrix_path", "");
    if (j.contains("features")) {
        const nlohmann::json& f = j.at("features");
        s.features.one_norm = f.value("one_norm", 0.0);
        s.features.inf_norm = f.value("inf_norm", 0.0);
        s.features.frob_norm = f.value("frob_norm", 0.0);
        s.features.sparsity = f.value("sparsity", 0.0);
        s.features.symmetric_flag = f.value("symmetric_flag", 0.0);
        s.features.asymmetry_ratio = f.value("asymmetry_ratio", 0.0);
        s.features.dimension_log = f.value("dimension_log", 0.0);
    }
    s.xm.alpha = j.at("alpha").get<double>();
    s.xm.epsilon = j.at("eps").get<double>();
    s.xm.delta = j.at("delta").get<double>();
    s.xm.solver = solver_from_string(j.at("solver").get<std::string>());
    s.y_mean = j.at("y_mean").get<double>();
    s.y_std = j.at("y_std").get<double>();
    s.replicate_ys = j.value("replicate_ys", std::vector<double>{});
    s.nonconverged = j.value("nonconverged", false);
    s.degenerate = j.value("degenerate", false);
    s.invalid = j.value("invalid", false);
    s.strategy = j.value("strategy", "");
    s.round = j.value("round", 0);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
}

}  // namespace

void write_jsonl(const std::string& path, const std::vector<LabeledSample>& samples,
                 bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const LabeledSample& s : samples) out << sample_to_json(s).dump() << "\n";
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<LabeledSample> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<LabeledSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(sample_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace stoprec
