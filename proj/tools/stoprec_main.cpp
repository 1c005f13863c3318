// stoprec: build MCMC matrix-inversion preconditioners, measure their effect
// on Krylov iteration counts, and tune (alpha, epsilon, delta) with a graph
// neural surrogate plus Expected-Improvement search.
//
// Logs go to stderr; data goes to files or single-line JSON on stdout.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stoprec/matgen.hpp"
#include "stoprec/pipeline.hpp"
#include "stoprec/report.hpp"

namespace fs = std::filesystem;
using namespace stoprec;
using nlohmann::json;

namespace {

struct LoadedDataset {
    std::vector<LabeledSample> samples;
    std::map<std::string, SparseMatrix> matrices;
    std::map<std::string, const MatrixGraph*> graphs;
    std::map<std::string, std::vector<double>> features;
    std::map<std::string, MatrixGraph> graph_storage;
};

// Resolves matrix_path entries relative to the dataset file's directory.
LoadedDataset load_dataset(const std::string& path) {
    LoadedDataset out;
    out.samples = read_jsonl(path);
    const fs::path base = fs::path(path).parent_path();
    for (const LabeledSample& s : out.samples) {
        if (out.matrices.count(s.matrix_id)) continue;
        fs::path mp(s.matrix_path);
        if (mp.is_relative() && !fs::exists(mp)) mp = base / mp;
        if (!fs::exists(mp))
            throw std::runtime_error("dataset '" + path + "': matrix file '" + s.matrix_path +
                                     "' not found for matrix_id '" + s.matrix_id + "'");
        SparseMatrix A = read_matrix_market(mp.string());
        out.features.emplace(s.matrix_id, matrix_features(A).to_vector());
        out.graph_storage.emplace(s.matrix_id, build_graph(A));
        out.matrices.emplace(s.matrix_id, std::move(A));
    }
    for (const auto& [id, g] : out.graph_storage) out.graphs.emplace(id, &g);
    return out;
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(csv);
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

json solve_result_to_json(const SolveResult& r, SolverKind solver) {
    const char* status = "converged";
    switch (r.status) {
        case SolveStatus::Converged: status = "converged"; break;
        case SolveStatus::MaxIterations: status = "max_iterations"; break;
        case SolveStatus::Breakdown: status = "breakdown"; break;
        case SolveStatus::Divergence: status = "divergence"; break;
        case SolveStatus::Stagnation: status = "stagnation"; break;
    }
    return json{{"solver", to_string(solver)},
                {"converged", r.converged},
                {"iterations", r.iterations},
                {"final_rel_residual", r.final_rel_residual},
                {"status", status},
                {"detail", r.detail}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stoprec: MCMC matrix-inversion preconditioner tuning toolkit"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads for chain building")
        ->capture_default_str();

    // ---- gen ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "generate a test matrix (Matrix Market)");
    std::string gen_family = "laplacian2d", gen_out;
    std::uint64_t gen_seed = 0;
    index_t gen_g = 16, gen_n = 16;
    double gen_peclet = 0.0, gen_density = 0.3;
    gen->add_option("--family", gen_family, "laplacian2d | advdiff2d | randomdd")
        ->capture_default_str();
    gen->add_option("--g", gen_g, "grid parameter (dimension (g-1)^2)")->capture_default_str();
    gen->add_option("--n", gen_n, "dimension (randomdd)")->capture_default_str();
    gen->add_option("--peclet", gen_peclet, "advection strength (advdiff2d)")
        ->capture_default_str();
    gen->add_option("--density", gen_density, "off-diagonal density (randomdd)")
        ->capture_default_str();
    gen->add_option("--seed", gen_seed, "generator seed (randomdd)")->capture_default_str();
    gen->add_option("--out", gen_out, "output .mtx path")->required();

    // ---- precond -----------------------------------------------------------
    auto* precond = app.add_subcommand("precond", "build the MCMC-MI preconditioner");
    std::string pc_matrix, pc_out;
    McmcParams pc_params;
    McmcFixedSettings pc_fixed;
    precond->add_option("--matrix", pc_matrix, "system matrix .mtx")->required();
    precond->add_option("--alpha", pc_params.alpha)->capture_default_str();
    precond->add_option("--eps", pc_params.epsilon)->capture_default_str();
    precond->add_option("--delta", pc_params.delta)->capture_default_str();
    precond->add_option("--seed", pc_fixed.seed)->capture_default_str();
    precond->add_option("--fill", pc_fixed.fill_factor_multiplier, "fill factor multiplier")
        ->capture_default_str();
    precond->add_option("--trunc", pc_fixed.truncation_threshold)->capture_default_str();
    precond->add_option("--chain-cap", pc_fixed.chain_count_cap)->capture_default_str();
    precond->add_option("--walk-cap", pc_fixed.walk_length_cap)->capture_default_str();
    precond->add_option("--out", pc_out, "output preconditioner .mtx")->required();

    // ---- solve ---------------------------------------------------------------
    auto* solve_cmd = app.add_subcommand("solve", "run a Krylov solve, print JSON result");
    std::string sv_matrix, sv_precond, sv_solver = "gmres";
    SolverConfig sv_cfg;
    solve_cmd->add_option("--matrix", sv_matrix)->required();
    solve_cmd->add_option("--precond", sv_precond, "left preconditioner .mtx");
    solve_cmd->add_option("--solver", sv_solver, "gmres | bicgstab | cg")->capture_default_str();
    solve_cmd->add_option("--tol", sv_cfg.rel_tol)->capture_default_str();
    solve_cmd->add_option("--max-iters", sv_cfg.max_iters, "0 = 10n")->capture_default_str();
    solve_cmd->add_option("--restart", sv_cfg.gmres_restart)->capture_default_str();

    // ---- grid ----------------------------------------------------------------
    auto* grid_cmd = app.add_subcommand("grid", "grid-search dataset for one matrix");
    std::string gr_matrix, gr_id, gr_out, gr_solvers = "gmres";
    std::string gr_alphas, gr_epsilons, gr_deltas, gr_divergence;
    int gr_replicates = 10;
    double gr_tol = 1e-8;
    std::uint64_t gr_seed = 0;
    grid_cmd->add_option("--matrix", gr_matrix)->required();
    grid_cmd->add_option("--id", gr_id, "matrix id recorded in the dataset");
    grid_cmd->add_option("--solvers", gr_solvers, "comma list: gmres,bicgstab,cg")
        ->capture_default_str();
    grid_cmd->add_option("--replicates", gr_replicates)->capture_default_str();
    grid_cmd->add_option("--seed", gr_seed)->capture_default_str();
    grid_cmd->add_option("--tol", gr_tol)->capture_default_str();
    grid_cmd->add_option("--alphas", gr_alphas, "comma list (default 1,2,4,5)");
    grid_cmd->add_option("--epsilons", gr_epsilons, "comma list (default 1/2..1/16)");
    grid_cmd->add_option("--deltas", gr_deltas, "comma list (default 1/2..1/16)");
    grid_cmd->add_option("--divergence-alphas", gr_divergence,
                         "extra near-zero alphas evaluated at eps=delta=1/4");
    grid_cmd->add_option("--out", gr_out, "output dataset .jsonl")->required();

    // ---- train -----------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the surrogate on a dataset");
    std::vector<std::string> tr_data;
    std::string tr_out;
    SurrogateConfig tr_cfg;
    train_cmd->add_option("--data", tr_data, "dataset .jsonl (repeatable)")->required();
    train_cmd->add_option("--out", tr_out, "output checkpoint path")->required();
    train_cmd->add_option("--seed", tr_cfg.seed)->capture_default_str();
    train_cmd->add_option("--epochs", tr_cfg.max_epochs)->capture_default_str();
    train_cmd->add_option("--batch", tr_cfg.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", tr_cfg.learn_rate)->capture_default_str();
    train_cmd->add_option("--dropout", tr_cfg.dropout)->capture_default_str();

    // ---- propose ----------------------------------------------------------------
    auto* propose_cmd = app.add_subcommand("propose", "EI proposals for one matrix");
    std::string pr_model, pr_matrix, pr_solver = "gmres", pr_data;
    int pr_k = 32;
    AcquisitionConfig pr_acq;
    propose_cmd->add_option("--model", pr_model)->required();
    propose_cmd->add_option("--matrix", pr_matrix)->required();
    propose_cmd->add_option("--k", pr_k)->capture_default_str();
    propose_cmd->add_option("--xi", pr_acq.xi)->capture_default_str();
    propose_cmd->add_option("--solver", pr_solver)->capture_default_str();
    propose_cmd->add_option("--seed", pr_acq.seed)->capture_default_str();
    propose_cmd->add_option("--data", pr_data,
                            "dataset .jsonl; y_min = best sample median of this matrix");

    // ---- tune ----------------------------------------------------------------
    auto* tune_cmd = app.add_subcommand("tune", "full tuning loop from a config file");
    std::string tu_config;
    tune_cmd->add_option("--config", tu_config, "TOML config (documented in README)")
        ->required();

    // ---- report ----------------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "calibration / comparison tables");
    report_cmd->require_subcommand(1);
    auto* rep_cov = report_cmd->add_subcommand("coverage", "prediction-interval coverage");
    auto* rep_inc = report_cmd->add_subcommand("inclusion", "pointwise 99% CI inclusion");
    auto* rep_cmp = report_cmd->add_subcommand("compare", "per-strategy box summaries");
    std::string rc_data, rc_model, rc_out;
    rep_cov->add_option("--data", rc_data)->required();
    rep_cov->add_option("--model", rc_model)->required();
    rep_cov->add_option("--out", rc_out, "output directory")->required();
    std::string ri_data, ri_model, ri_out;
    rep_inc->add_option("--data", ri_data)->required();
    rep_inc->add_option("--model", ri_model)->required();
    rep_inc->add_option("--out", ri_out, "output directory")->required();
    std::vector<std::string> rx_data;
    std::string rx_out;
    rep_cmp->add_option("--data", rx_data, "dataset .jsonl (repeatable)")->required();
    rep_cmp->add_option("--out", rx_out, "output directory")->required();

    // ---- repro ----------------------------------------------------------------
    auto* repro_cmd = app.add_subcommand("repro", "desk-scale end-to-end pipeline");
    std::string rp_out = "repro_out";
    std::uint64_t rp_seed = 42;
    bool rp_smoke = false;
    repro_cmd->add_option("--out", rp_out)->capture_default_str();
    repro_cmd->add_option("--seed", rp_seed)->capture_default_str();
    repro_cmd->add_flag("--smoke", rp_smoke, "reduced-scale profile (fast)");

    // Let --threads appear after the subcommand name too.
    for (CLI::App* sc : app.get_subcommands([](CLI::App*) { return true; })) {
        sc->fallthrough();
        for (CLI::App* nested : sc->get_subcommands([](CLI::App*) { return true; }))
            nested->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            GeneratorSpec spec;
            spec.family = family_from_string(gen_family);
            spec.grid_param = spec.family == MatrixFamily::RandomDiagDominant ? gen_n : gen_g;
            spec.peclet = gen_peclet;
            spec.density = gen_density;
            spec.seed = gen_seed;
            const SparseMatrix A = generate(spec);
            write_matrix_market(A, gen_out);
            std::fprintf(stderr, "stoprec: wrote %zu x %zu matrix (%zu nnz) to %s\n", A.nrows,
                         A.ncols, A.nnz(), gen_out.c_str());
        } else if (*precond) {
            const SparseMatrix A = read_matrix_market(pc_matrix);
            const PreconditionerBuildReport rep =
                build_preconditioner(A, pc_params, pc_fixed, threads);
            write_matrix_market(rep.P, pc_out);
            std::cout << json{{"chains_per_row", rep.chains_per_row},
                              {"max_walk_len", rep.max_walk_len},
                              {"spectral_bound", rep.spectral_bound},
                              {"degenerate", rep.degenerate},
                              {"build_wall_seconds", rep.build_wall_seconds},
                              {"nnz", rep.P.nnz()},
                              {"out", pc_out}}
                             .dump()
                      << "\n";
        } else if (*solve_cmd) {
            const SparseMatrix A = read_matrix_market(sv_matrix);
            SparseMatrix P;
            const bool has_p = !sv_precond.empty();
            if (has_p) P = read_matrix_market(sv_precond);
            sv_cfg.solver = solver_from_string(sv_solver);
            const DenseVector b = spmv(A, DenseVector(A.ncols, 1.0));
            const SolveResult r = solve(A, b, has_p ? &P : nullptr, sv_cfg);
            std::cout << solve_result_to_json(r, sv_cfg.solver).dump() << "\n";
            return r.converged ? 0 : 3;
        } else if (*grid_cmd) {
            SparseMatrix A = read_matrix_market(gr_matrix);
            EvalContext ctx;
            ctx.A = &A;
            ctx.matrix_id = gr_id.empty() ? fs::path(gr_matrix).stem().string() : gr_id;
            ctx.matrix_path = gr_matrix;
            ctx.solver_cfg.rel_tol = gr_tol;
            ctx.replicates = gr_replicates;
            ctx.threads = threads;
            ctx.fixed.seed = gr_seed;
            GridSpec spec;
            if (!gr_alphas.empty()) spec.alphas = parse_list(gr_alphas);
            if (!gr_epsilons.empty()) spec.epsilons = parse_list(gr_epsilons);
            if (!gr_deltas.empty()) spec.deltas = parse_list(gr_deltas);
            std::vector<LabeledSample> all;
            std::stringstream ss(gr_solvers);
            std::string solver_name;
            while (std::getline(ss, solver_name, ',')) {
                const SolverKind solver = solver_from_string(solver_name);
                auto part = grid_search(ctx, spec, solver);
                all.insert(all.end(), part.begin(), part.end());
                std::uint64_t ordinal = 5000;
                for (double a : parse_list(gr_divergence)) {
                    ctx.fixed.seed = gr_seed + 10000 * ordinal++;
                    LabeledSample s = evaluate(ctx, McmcParams{a, 0.25, 0.25, solver});
                    s.strategy = "divergence";
                    all.push_back(std::move(s));
                    ctx.fixed.seed = gr_seed;
                }
            }
            write_jsonl(gr_out, all);
            std::fprintf(stderr, "stoprec: wrote %zu samples to %s\n", all.size(),
                         gr_out.c_str());
        } else if (*train_cmd) {
            std::vector<LabeledSample> samples;
            std::map<std::string, const MatrixGraph*> graphs;
            std::map<std::string, std::vector<double>> features;
            std::vector<LoadedDataset> keep_alive;
            keep_alive.reserve(tr_data.size());
            for (const std::string& path : tr_data)
                keep_alive.push_back(load_dataset(path));
            for (const LoadedDataset& d : keep_alive) {
                samples.insert(samples.end(), d.samples.begin(), d.samples.end());
                for (const auto& [id, g] : d.graphs) graphs.emplace(id, g);
                for (const auto& [id, f] : d.features) features.emplace(id, f);
            }
            SurrogateNet net = SurrogateNet::init(tr_cfg);
            const TrainHistory hist = train(net, to_train_samples(samples, graphs, features));
            save_checkpoint(net, tr_out);
            std::fprintf(stderr,
                         "stoprec: trained on %zu samples, best val loss %.6g at epoch %zu; "
                         "checkpoint %s\n",
                         samples.size(), hist.best_val_loss, hist.best_epoch, tr_out.c_str());
        } else if (*propose_cmd) {
            const SurrogateNet net = load_checkpoint(pr_model);
            const SparseMatrix A = read_matrix_market(pr_matrix);
            const MatrixGraph g = build_graph(A);
            const auto xa = matrix_features(A).to_vector();
            double y_min = 1.0;
            if (!pr_data.empty()) {
                const auto data = read_jsonl(pr_data);
                const std::string id = fs::path(pr_matrix).stem().string();
                if (const auto best = best_by_median(data, id)) y_min = best->median_y;
            }
            const auto proposals = propose_batch(net, g, xa, y_min, pr_k, pr_acq,
                                                 solver_from_string(pr_solver));
            for (const McmcParams& p : proposals)
                std::cout << json{{"alpha", p.alpha},
                                  {"eps", p.epsilon},
                                  {"delta", p.delta},
                                  {"solver", to_string(p.solver)}}
                                 .dump()
                          << "\n";
        } else if (*tune_cmd) {
            RunConfig rc = RunConfig::from_file(tu_config);
            if (threads > 1) rc.threads = threads;
            PipelineConfig pc;
            pc.run = rc;
            const fs::path base = fs::path(tu_config).parent_path();
            auto resolve = [&base](const std::string& p) {
                fs::path fp(p);
                if (fp.is_relative() && !fs::exists(fp)) fp = base / fp;
                return PipelineMatrix{fs::path(p).stem().string(), fp.string()};
            };
            for (const std::string& p : rc.train_matrices) pc.train_matrices.push_back(resolve(p));
            for (const std::string& p : rc.tune_matrices) pc.tune_matrices.push_back(resolve(p));
            run_pipeline(pc);
            std::fprintf(stderr, "stoprec: tuning run complete; outputs in %s\n",
                         rc.out_dir.c_str());
        } else if (*rep_cov || *rep_inc) {
            const bool cov = static_cast<bool>(*rep_cov);
            const LoadedDataset d = load_dataset(cov ? rc_data : ri_data);
            const SurrogateNet net = load_checkpoint(cov ? rc_model : ri_model);
            const std::string out_dir = cov ? rc_out : ri_out;
            fs::create_directories(out_dir);
            std::vector<Prediction> per_sample, pooled;
            std::vector<double> obs;
            for (const LabeledSample& s : d.samples) {
                const Prediction p =
                    predict(net, *d.graphs.at(s.matrix_id), d.features.at(s.matrix_id), s.xm);
                per_sample.push_back(p);
                for (double y : s.replicate_ys) {
                    pooled.push_back(p);
                    obs.push_back(y);
                }
            }
            if (cov) {
                std::vector<CoverageRow> rows;
                for (double tau : default_tau_levels())
                    rows.push_back(empirical_coverage(pooled, obs, tau));
                write_coverage_csv((fs::path(out_dir) / "coverage.csv").string(), rows);
                std::fprintf(stderr, "stoprec: coverage table written (gap %.4f)\n",
                             mean_calibration_gap(rows));
            } else {
                write_inclusion_csv((fs::path(out_dir) / "inclusion.csv").string(),
                                    pointwise_ci_inclusion(d.samples, per_sample));
                std::fprintf(stderr, "stoprec: inclusion table written\n");
            }
        } else if (*rep_cmp) {
            std::map<std::string, std::vector<LabeledSample>> by_strategy;
            for (const std::string& path : rx_data)
                for (LabeledSample& s : read_jsonl(path))
                    by_strategy[s.strategy.empty() ? "unlabeled" : s.strategy].push_back(
                        std::move(s));
            std::vector<BoxSummary> boxes;
            for (const auto& [label, samples] : by_strategy)
                boxes.push_back(summarize_strategy(label, samples));
            fs::create_directories(rx_out);
            write_compare_csv((fs::path(rx_out) / "compare.csv").string(), boxes);
            write_compare_json((fs::path(rx_out) / "compare.json").string(), boxes);
            std::fprintf(stderr, "stoprec: compare tables written\n");
        } else if (*repro_cmd) {
            const PipelineConfig pc = repro_config(rp_out, rp_seed, threads, rp_smoke);
            const PipelineResult res = run_pipeline(pc);
            for (const HoldoutOutcome& h : res.holdouts) {
                std::fprintf(stderr, "stoprec: holdout %s grid best median %.4f\n",
                             h.matrix_id.c_str(), h.grid_best_median);
                for (const auto& [xi, v] : h.bo_best_median)
                    std::fprintf(stderr, "stoprec:   bo(xi=%g) best median %.4f\n", xi, v);
            }
            std::fprintf(stderr, "stoprec: repro artifacts in %s\n", rp_out.c_str());
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "stoprec: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "stoprec: %s\n", e.what());
        return 1;
    }
    return 0;
}
