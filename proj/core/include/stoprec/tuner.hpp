/// @file tuner.hpp
/// @brief Parameter-search drivers: replicated evaluation of one x_M, grid
/// and random baselines, and the Bayesian tuning loop (propose, evaluate,
/// append, retrain).

#ifndef STOPREC_TUNER_HPP
#define STOPREC_TUNER_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stoprec/acquisition.hpp"
#include "stoprec/mcmc.hpp"
#include "stoprec/surrogate.hpp"

namespace stoprec {

/// One labelled datum of the tuning dataset.
struct LabeledSample {
    std::string matrix_id;
    std::string matrix_path;  ///< Matrix Market file, relative to the dataset
    MatrixFeatures features;  ///< cheap global features of the matrix
    McmcParams xm;
    double y_mean = 0.0;
    double y_std = 0.0;  ///< sample std, ddof = 1
    std::vector<double> replicate_ys;
    bool nonconverged = false;  ///< some replicate hit the max-iteration clamp
    bool degenerate = false;    ///< some replicate had ||T||_inf >= 1
    bool invalid = false;       ///< fatal solver/preconditioner error
    std::string strategy;       ///< "grid", "random", "bo", ...
    int round = 0;
    std::uint64_t seed = 0;
};

struct GridSpec {
    std::vector<double> alphas{1.0, 2.0, 4.0, 5.0};
    std::vector<double> epsilons{0.5, 0.25, 0.125, 0.0625};
    std::vector<double> deltas{0.5, 0.25, 0.125, 0.0625};
};

/// Evaluation context for one matrix: identity, solver settings, replicate
/// count and the cached unpreconditioned step count.
struct EvalContext {
    const SparseMatrix* A = nullptr;
    std::string matrix_id;
    std::string matrix_path;
    SolverConfig solver_cfg;
    McmcFixedSettings fixed;
    int replicates = 10;
    int threads = 1;
    /// Preconditioned runs are budgeted at clamp_multiplier x the baseline
    /// step count (never above solver_cfg.max_iters); a run that exhausts the
    /// budget contributes steps = that budget. This keeps the pessimistic
    /// clamp for failed runs at y = clamp_multiplier, a scale the surrogate
    /// can train against. <= 0 disables the relative budget.
    double clamp_multiplier = 8.0;
    /// Unpreconditioned step counts per solver, filled on first use.
    std::map<SolverKind, index_t> baseline_steps;

    index_t baseline(SolverKind solver);
    const MatrixFeatures& features();

  private:
    std::optional<MatrixFeatures> features_;
};

/// Build `replicates` preconditioners with seeds fixed.seed + r, solve, and
/// record y = steps_pre / steps_nopre per replicate. Non-converged solves
/// contribute through the max-iteration clamp and set the flag.
LabeledSample evaluate(EvalContext& ctx, const McmcParams& xm);

std::vector<LabeledSample> grid_search(EvalContext& ctx, const GridSpec& grid, SolverKind solver);

/// Uniform draws in the encoded bounds; deterministic in `seed`.
std::vector<LabeledSample> random_search(EvalContext& ctx, int n_points,
                                         const AcquisitionConfig& bounds, SolverKind solver,
                                         std::uint64_t seed);

struct TuningRound {
    int round = 0;
    std::string matrix_id;
    std::vector<McmcParams> proposals;
};

struct BestRecord {
    McmcParams xm;
    double median_y = 0.0;
};

struct TuningRun {
    int budget = 0;
    int batch = 0;
    std::string strategy;
    double xi = 0.0;
    std::uint64_t seed = 0;
    std::vector<TuningRound> rounds;
    std::map<std::string, BestRecord> best_so_far;  ///< per matrix_id
    int evaluations = 0;
};

struct BoConfig {
    int budget = 32;
    int batch = 32;
    double xi = 0.05;
    SolverKind solver = SolverKind::GMRES;
    AcquisitionConfig acquisition;
    std::uint64_t seed = 0;
};

struct BoResult {
    TuningRun run;
    SurrogateNet net;  ///< retrained after the final round
    std::vector<LabeledSample> new_samples;
};

/// Per-matrix inputs the loop needs beyond the evaluation context.
struct TuneMatrix {
    EvalContext* eval = nullptr;
    const MatrixGraph* graph = nullptr;
    std::vector<double> xa;
};

/// Algorithm-1 loop: rounds of propose-batch / evaluate (ctx.replicates
/// each) / append / full retrain from fresh initialization, until `budget`
/// new samples exist. y_min for EI is the best observed sample median for
/// the matrix so far (1.0 when it has no samples yet). Returns the run
/// record, the final net and the appended samples.
BoResult bo_loop(std::vector<TuneMatrix>& matrices, const std::vector<LabeledSample>& seed_data,
                 const std::map<std::string, const MatrixGraph*>& seed_graphs,
                 const std::map<std::string, std::vector<double>>& seed_features,
                 const SurrogateNet& model, const BoConfig& cfg);

/// Rebuild surrogate training samples from labelled data plus per-matrix
/// graphs/features.
std::vector<TrainSample> to_train_samples(const std::vector<LabeledSample>& data,
                                          const std::map<std::string, const MatrixGraph*>& graphs,
                                          const std::map<std::string, std::vector<double>>& features);

// Dataset file I/O: JSON lines, one LabeledSample per line, stable field
// names, append-friendly.
void write_jsonl(const std::string& path, const std::vector<LabeledSample>& samples,
                 bool append = false);
std::vector<LabeledSample> read_jsonl(const std::string& path);

/// Best sample (minimum sample median of replicate_ys) among valid samples
/// of one matrix; nullopt if none.
std::optional<BestRecord> best_by_median(const std::vector<LabeledSample>& samples,
                                         const std::string& matrix_id);

}  // namespace stoprec

#endif  // STOPREC_TUNER_HPP
