/// @file pipeline.hpp
/// @brief End-to-end tuning pipeline: seed grid datasets on the training
/// matrices, train the surrogate, run one-or-more BO rounds per exploration
/// setting on the held-out matrices, and emit datasets, checkpoints and
/// calibration/comparison reports into one directory.

#ifndef STOPREC_PIPELINE_HPP
#define STOPREC_PIPELINE_HPP

#include <map>
#include <string>
#include <vector>

#include "stoprec/runconfig.hpp"

namespace stoprec {

struct PipelineMatrix {
    std::string id;
    std::string path;  ///< Matrix Market file (read, or written when generated)
};

struct PipelineConfig {
    RunConfig run;  ///< knobs: grid, solver, mcmc, surrogate, bo, seeds

    /// When empty, the desk-scale defaults are generated into out_dir:
    /// training lap16, lap32, advdiff16 (peclet 10); held-out advdiff32
    /// (peclet 10). The smoke profile shrinks everything for fast
    /// determinism checks.
    std::vector<PipelineMatrix> train_matrices;
    std::vector<PipelineMatrix> tune_matrices;
    bool smoke = false;
};

struct HoldoutOutcome {
    std::string matrix_id;
    double grid_best_median = 0.0;
    double pre_calibration_gap = 0.0;
    std::map<double, double> bo_best_median;      ///< per xi
    std::map<double, double> post_calibration_gap;  ///< per xi
};

struct PipelineResult {
    std::string out_dir;
    std::vector<HoldoutOutcome> holdouts;
};

PipelineResult run_pipeline(const PipelineConfig& cfg);

/// The `stoprec repro` profile: desk-scale defaults with generated matrices.
PipelineConfig repro_config(const std::string& out_dir, std::uint64_t seed, int threads,
                            bool smoke);

}  // namespace stoprec

#endif  // STOPREC_PIPELINE_HPP
