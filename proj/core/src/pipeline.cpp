#include "stoprec/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "stoprec/matgen.hpp"
#include "stoprec/report.hpp"

namespace stoprec {

namespace fs = std::filesystem;

PipelineConfig repro_config(const std::string& out_dir, std::uint64_t seed, int threads,
                            bool smoke) {
    PipelineConfig cfg;
    cfg.run.out_dir = out_dir;
    cfg.run.seed = seed;
    cfg.run.threads = threads;
    cfg.run.surrogate.seed = seed;
    cfg.run.acquisition.seed = seed;
    cfg.run.fixed.seed = seed;
    // Desk-scale datasets are ~200 samples; match the optimizer-step budget
    // the reference architecture assumes on its larger dataset.
    cfg.run.surrogate.batch_size = 32;
    cfg.run.surrogate.max_epochs = 400;
    cfg.run.surrogate.patience = 50;
    cfg.smoke = smoke;
    if (smoke) {
        cfg.run.grid = GridSpec{{1.0, 4.0}, {0.5, 0.125}, {0.5, 0.125}};
        cfg.run.divergence_alphas = {0.05};
        cfg.run.replicates = 3;
        cfg.run.surrogate.max_epochs = 25;
        cfg.run.surrogate.patience = 10;
        cfg.run.surrogate.batch_size = 32;
        cfg.run.surrogate.graph_hidden = 64;
        cfg.run.surrogate.combined_hidden = 64;
        cfg.run.bo_budget = 4;
        cfg.run.bo_batch = 4;
        cfg.run.random_points = 4;
        cfg.run.acquisition.restarts = 4;
        cfg.run.acquisition.max_opt_iters = 50;
        cfg.run.xis = {0.05};
    }
    return cfg;
}

namespace {

struct MatrixBundle {
    std::string id;
    std::string path;
    SparseMatrix A;
    MatrixGraph graph;
    std::vector<double> xa;
    EvalContext ctx;
};

void load_bundle(MatrixBundle& b, const RunConfig& run, std::size_t index) {
    b.graph = build_graph(b.A);
    b.xa = matrix_features(b.A).to_vector();
    b.ctx.A = &b.A;
    b.ctx.matrix_id = b.id;
    b.ctx.matrix_path = b.path;
    b.ctx.solver_cfg = run.solver_cfg;
    b.ctx.fixed = run.fixed;
    b.ctx.fixed.seed = run.seed + 100000007ull * static_cast<std::uint64_t>(index + 1);
    b.ctx.replicates = run.replicates;
    b.ctx.clamp_multiplier = run.clamp_multiplier;
    b.ctx.threads = run.threads;
}

std::string xi_label(double xi) { return "xi" + format_double(xi); }

// Pooled (prediction, observation) pairs: one prediction per sample, repeated
// across its replicates.
void pool_predictions(const SurrogateNet& net, const MatrixBundle& m,
                      const std::vector<LabeledSample>& samples,
                      std::vector<Prediction>& preds_per_sample,
                      std::vector<Prediction>& pooled_preds, std::vector<double>& pooled_obs) {
    preds_per_sample.clear();
    pooled_preds.clear();
    pooled_obs.clear();
    for (const LabeledSample& s : samples) {
        const Prediction p = predict(net, m.graph, m.xa, s.xm);
        preds_per_sample.push_back(p);
        for (double y : s.replicate_ys) {
            pooled_preds.push_back(p);
            pooled_obs.push_back(y);
        }
    }
}

std::vector<CoverageRow> coverage_rows(const std::vector<Prediction>& preds,
                                       const std::vector<double>& obs) {
    std::vector<CoverageRow> rows;
    for (double tau : default_tau_levels()) rows.push_back(empirical_coverage(preds, obs, tau));
    return rows;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    const RunConfig& run = cfg.run;
    const fs::path out(run.out_dir);
    fs::create_directories(out / "matrices");
    fs::create_directories(out / "reports");

    // --- matrices -----------------------------------------------------------
    std::vector<MatrixBundle> train_set, tune_set;
    if (cfg.train_matrices.empty()) {
        const index_t g_small = cfg.smoke ? 6 : 16;
        const index_t g_large = cfg.smoke ? 8 : 32;
        auto emit = [&](std::vector<MatrixBundle>& dst, const std::string& id, SparseMatrix A) {
            MatrixBundle b;
            b.id = id;
            b.path = (out / "matrices" / (id + ".mtx")).string();
            b.A = std::move(A);
            write_matrix_market(b.A, b.path);
            dst.push_back(std::move(b));
        };
        emit(train_set, "lap" + std::to_string(g_small), gen_laplacian2d(g_small));
        emit(train_set, "lap" + std::to_string(g_large), gen_laplacian2d(g_large));
        emit(train_set, "advdiff" + std::to_string(g_small), gen_advdiff2d(g_small, 10.0));
        emit(tune_set, "advdiff" + std::to_string(g_large), gen_advdiff2d(g_large, 10.0));
    } else {
        auto read_into = [&](const std::vector<PipelineMatrix>& src,
                             std::vector<MatrixBundle>& dst) {
            for (const PipelineMatrix& pm : src) {
                MatrixBundle b;
                b.id = pm.id;
                b.path = pm.path;
                b.A = read_matrix_market(pm.path);
                dst.push_back(std::move(b));
            }
        };
        read_into(cfg.train_matrices, train_set);
        read_into(cfg.tune_matrices, tune_set);
    }
    for (std::size_t i = 0; i < train_set.size(); ++i) load_bundle(train_set[i], run, i);
    for (std::size_t i = 0; i < tune_set.size(); ++i) load_bundle(tune_set[i], run, train_set.size() + i);
    // Dataset records carry paths relative to the dataset files (written at
    // the out_dir root), so artifacts stay byte-identical across out_dirs.
    for (MatrixBundle& m : train_set)
        m.ctx.matrix_path = fs::proximate(m.path, out).generic_string();
    for (MatrixBundle& m : tune_set)
        m.ctx.matrix_path = fs::proximate(m.path, out).generic_string();

    std::map<std::string, const MatrixGraph*> train_graphs;
    std::map<std::string, std::vector<double>> train_features;
    for (const MatrixBundle& m : train_set) {
        train_graphs.emplace(m.id, &m.graph);
        train_features.emplace(m.id, m.xa);
    }

    // --- seed dataset: coarse grid + divergence-exposure points -------------
    std::vector<LabeledSample> seed_data;
    for (MatrixBundle& m : train_set) {
        std::vector<LabeledSample> g = grid_search(m.ctx, run.grid, run.solver);
        seed_data.insert(seed_data.end(), g.begin(), g.end());
        const std::uint64_t base = m.ctx.fixed.seed;
        std::uint64_t ordinal = 1000;
        for (double a : run.divergence_alphas) {
            m.ctx.fixed.seed = base + 10000 * ordinal++;
            LabeledSample s = evaluate(m.ctx, McmcParams{a, 0.25, 0.25, run.solver});
            s.strategy = "divergence";
            seed_data.push_back(std::move(s));
        }
        m.ctx.fixed.seed = base;
    }
    write_jsonl((out / "dataset_train.jsonl").string(), seed_data);

    // --- held-out grids (evaluation only, never used for pre-BO training) ---
    std::map<std::string, std::vector<LabeledSample>> holdout_grid;
    for (MatrixBundle& m : tune_set) {
        holdout_grid[m.id] = grid_search(m.ctx, run.grid, run.solver);
        write_jsonl((out / ("dataset_" + m.id + "_grid.jsonl")).string(), holdout_grid[m.id]);
    }

    // --- pre-BO surrogate ----------------------------------------------------
    SurrogateNet net_pre = SurrogateNet::init(run.surrogate);
    train(net_pre, to_train_samples(seed_data, train_graphs, train_features));
    save_checkpoint(net_pre, (out / "model_pre.ckpt").string());

    PipelineResult result;
    result.out_dir = run.out_dir;
    std::vector<Prediction> per_sample, pooled;
    std::vector<double> obs;
    for (MatrixBundle& m : tune_set) {
        HoldoutOutcome outcome;
        outcome.matrix_id = m.id;
        pool_predictions(net_pre, m, holdout_grid[m.id], per_sample, pooled, obs);
        const auto cov = coverage_rows(pooled, obs);
        write_coverage_csv((out / "reports" / ("coverage_pre_" + m.id + ".csv")).string(), cov);
        write_inclusion_csv((out / "reports" / ("inclusion_pre_" + m.id + ".csv")).string(),
                            pointwise_ci_inclusion(holdout_grid[m.id], per_sample));
        outcome.pre_calibration_gap = mean_calibration_gap(cov);
        if (const auto best = best_by_median(holdout_grid[m.id], m.id))
            outcome.grid_best_median = best->median_y;
        result.holdouts.push_back(std::move(outcome));
    }

    // --- random-search baseline ----------------------------------------------
    std::map<std::string, std::vector<LabeledSample>> random_data;
    if (run.random_points > 0) {
        for (MatrixBundle& m : tune_set) {
            const std::uint64_t base = m.ctx.fixed.seed;
            m.ctx.fixed.seed = base + 777777777ull;
            random_data[m.id] = random_search(m.ctx, run.random_points, run.acquisition,
                                              run.solver, run.seed + 31);
            m.ctx.fixed.seed = base;
            write_jsonl((out / ("dataset_" + m.id + "_random.jsonl")).string(),
                        random_data[m.id]);
        }
    }

    // --- BO rounds per exploration setting -----------------------------------
    for (double xi : run.xis) {
        std::vector<TuneMatrix> tm;
        for (MatrixBundle& m : tune_set) tm.push_back(TuneMatrix{&m.ctx, &m.graph, m.xa});

        BoConfig bo;
        bo.budget = run.bo_budget;
        bo.batch = run.bo_batch;
        bo.xi = xi;
        bo.solver = run.solver;
        bo.acquisition = run.acquisition;
        bo.acquisition.xi = xi;
        bo.seed = run.seed;
        BoResult br = bo_loop(tm, seed_data, train_graphs, train_features, net_pre, bo);

        const std::string label = xi_label(xi);
        write_jsonl((out / ("dataset_bo_" + label + ".jsonl")).string(), br.new_samples);
        int max_round = 0;
        for (const LabeledSample& s : br.new_samples) max_round = std::max(max_round, s.round);
        for (int t = 0; t <= max_round; ++t) {
            std::vector<LabeledSample> snap;
            for (const LabeledSample& s : br.new_samples)
                if (s.round <= t) snap.push_back(s);
            write_jsonl((out / ("dataset_bo_" + label + "_round" + std::to_string(t) + ".jsonl"))
                            .string(),
                        snap);
        }
        save_checkpoint(br.net, (out / ("model_post_" + label + ".ckpt")).string());

        nlohmann::json run_json{{"strategy", br.run.strategy},
                                {"xi", br.run.xi},
                                {"budget", br.run.budget},
                                {"batch", br.run.batch},
                                {"seed", br.run.seed},
                                {"evaluations", br.run.evaluations}};
        run_json["rounds"] = nlohmann::json::array();
        for (const TuningRound& round : br.run.rounds) {
            nlohmann::json props = nlohmann::json::array();
            for (const McmcParams& p : round.proposals)
                props.push_back({{"alpha", p.alpha},
                                 {"eps", p.epsilon},
                                 {"delta", p.delta},
                                 {"solver", to_string(p.solver)}});
            run_json["rounds"].push_back({{"round", round.round},
                                          {"matrix_id", round.matrix_id},
                                          {"proposals", props}});
        }
        run_json["best_so_far"] = nlohmann::json::object();
        for (const auto& [mid, best] : br.run.best_so_far)
            run_json["best_so_far"][mid] = {{"alpha", best.xm.alpha},
                                            {"eps", best.xm.epsilon},
                                            {"delta", best.xm.delta},
                                            {"solver", to_string(best.xm.solver)},
                                            {"median_y", best.median_y}};
        {
            std::ofstream rout((out / ("bo_run_" + label + ".json")).string());
            rout << run_json.dump(2) << "\n";
        }

        for (MatrixBundle& m : tune_set) {
            HoldoutOutcome* outcome = nullptr;
            for (HoldoutOutcome& h : result.holdouts)
                if (h.matrix_id == m.id) outcome = &h;

            std::vector<LabeledSample> bo_samples;
            for (const LabeledSample& s : br.new_samples)
                if (s.matrix_id == m.id) bo_samples.push_back(s);

            pool_predictions(br.net, m, holdout_grid[m.id], per_sample, pooled, obs);
            const auto cov = coverage_rows(pooled, obs);
            write_coverage_csv(
                (out / "reports" / ("coverage_post_" + label + "_" + m.id + ".csv")).string(),
                cov);
            write_inclusion_csv(
                (out / "reports" / ("inclusion_post_" + label + "_" + m.id + ".csv")).string(),
                pointwise_ci_inclusion(holdout_grid[m.id], per_sample));
            outcome->post_calibration_gap[xi] = mean_calibration_gap(cov);
            if (const auto best = best_by_median(bo_samples, m.id))
                outcome->bo_best_median[xi] = best->median_y;

            std::vector<BoxSummary> boxes;
            boxes.push_back(summarize_strategy("grid", holdout_grid[m.id]));
            if (random_data.count(m.id))
                boxes.push_back(summarize_strategy("random", random_data[m.id]));
            if (!bo_samples.empty())
                boxes.push_back(summarize_strategy("bo_" + label, bo_samples));
            write_compare_csv(
                (out / "reports" / ("compare_" + label + "_" + m.id + ".csv")).string(), boxes);
            write_compare_json(
                (out / "reports" / ("compare_" + label + "_" + m.id + ".json")).string(), boxes);
        }
    }

    // --- summary --------------------------------------------------------------
    nlohmann::json summary;
    summary["seed"] = run.seed;
    summary["smoke"] = cfg.smoke;
    summary["holdouts"] = nlohmann::json::array();
    for (const HoldoutOutcome& h : result.holdouts) {
        nlohmann::json jh{{"matrix_id", h.matrix_id},
                          {"grid_best_median", h.grid_best_median},
                          {"pre_calibration_gap", h.pre_calibration_gap}};
        for (const auto& [xi, v] : h.bo_best_median) jh["bo_best_median"][xi_label(xi)] = v;
        for (const auto& [xi, v] : h.post_calibration_gap)
            jh["post_calibration_gap"][xi_label(xi)] = v;
        summary["holdouts"].push_back(jh);
    }
    {
        nlohmann::json baselines;
        for (MatrixBundle& m : train_set) baselines[m.id] = m.ctx.baseline(run.solver);
        for (MatrixBundle& m : tune_set) baselines[m.id] = m.ctx.baseline(run.solver);
        summary["baseline_steps"] = baselines;
    }
    std::ofstream sout((out / "summary.json").string());
    sout << summary.dump(2) << "\n";

    return result;
}

}  // namespace stoprec
