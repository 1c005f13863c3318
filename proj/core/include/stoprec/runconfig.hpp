/// @file runconfig.hpp
/// @brief Structured run configuration for the tuning driver, read from a
/// small TOML subset: [sections], key = value with strings, numbers,
/// booleans and single-line arrays, '#' comments.

#ifndef STOPREC_RUNCONFIG_HPP
#define STOPREC_RUNCONFIG_HPP

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "stoprec/acquisition.hpp"
#include "stoprec/krylov.hpp"
#include "stoprec/mcmc.hpp"
#include "stoprec/surrogate.hpp"
#include "stoprec/tuner.hpp"

namespace stoprec {

struct ConfigValue {
    std::variant<std::string, double, bool, std::vector<std::string>, std::vector<double>> value;
    std::size_t line = 0;
};

/// section -> key -> value ("" section for top-level keys).
using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

ConfigTable parse_config_text(const std::string& text, const std::string& name);
ConfigTable parse_config_file(const std::string& path);

/// Everything `stoprec tune` needs; fully validated before any work starts.
/// Unknown keys are rejected; all violations are reported at once.
struct RunConfig {
    std::string out_dir = "out";
    std::uint64_t seed = 42;
    int threads = 1;

    std::vector<std::string> train_matrices;  ///< Matrix Market paths
    std::vector<std::string> tune_matrices;   ///< held-out targets of the BO loop

    GridSpec grid;
    std::vector<double> divergence_alphas{0.01, 0.05};

    SolverKind solver = SolverKind::GMRES;
    SolverConfig solver_cfg;
    McmcFixedSettings fixed;
    int replicates = 10;
    double clamp_multiplier = 8.0;

    SurrogateConfig surrogate;
    AcquisitionConfig acquisition;
    int bo_budget = 32;
    int bo_batch = 32;
    std::vector<double> xis{0.05, 1.0};
    int random_points = 32;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_table(const ConfigTable& table, const std::string& name);
};

}  // namespace stoprec

#endif  // STOPREC_RUNCONFIG_HPP
