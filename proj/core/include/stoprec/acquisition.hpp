/// @file acquisition.hpp
/// @brief Expected Improvement over the surrogate and its bounded
/// maximization to propose candidate x_M vectors.

#ifndef STOPREC_ACQUISITION_HPP
#define STOPREC_ACQUISITION_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "stoprec/surrogate.hpp"

namespace stoprec {

struct AcquisitionConfig {
    double xi = 0.05;  ///< exploration parameter, >= 0
    /// Box bounds in encoded space (alpha, ln eps, ln delta).
    std::array<std::array<double, 2>, 3> bounds{{{0.05, 8.0},
                                                 {-4.1588830833596715, 0.0},   // ln(1/64)
                                                 {-4.1588830833596715, 0.0}}};
    int restarts = 16;       ///< multi-start count per proposal slot
    int max_opt_iters = 200; ///< quasi-Newton iteration cap per start
    std::uint64_t seed = 0;
};

/// Closed-form EI for a Gaussian posterior: with z = (y_min - mu - xi)/sigma,
/// EI = (y_min - mu - xi) Phi(z) + sigma phi(z); at sigma = 0 it degenerates
/// to max(y_min - mu - xi, 0). Always >= 0.
double expected_improvement(double mu, double sigma, double y_min, double xi);

/// Posterior seam: mean/std and their gradients over the 3 continuous
/// encoded coordinates. The surrogate-backed implementation is
/// SurrogatePosterior; tests may substitute synthetic posteriors.
class Posterior {
  public:
    virtual ~Posterior() = default;
    virtual void eval(const std::array<double, 3>& x, double& mu, double& sigma,
                      std::array<double, 3>& dmu, std::array<double, 3>& dsigma) const = 0;
};

/// Evaluates the trained net at encoded (alpha, ln eps, ln delta) with a
/// fixed solver tag; the graph and x_A branches are cached in the context.
class SurrogatePosterior : public Posterior {
  public:
    SurrogatePosterior(const SurrogateNet& net, GraphContext ctx, SolverKind solver);
    void eval(const std::array<double, 3>& x, double& mu, double& sigma,
              std::array<double, 3>& dmu, std::array<double, 3>& dsigma) const override;

  private:
    const SurrogateNet& net_;
    GraphContext ctx_;
    std::vector<double> onehot_std_;  ///< standardized solver one-hot part
    std::array<double, 3> inv_std_;   ///< d std-space / d encoded-space
    std::array<double, 3> mean_;
    std::array<double, 3> std_;
};

/// Maximize EI over the box for k slots (multi-start projected quasi-Newton;
/// near-duplicate proposals are replaced by fresh draws). Every returned
/// point satisfies the bounds; points are mutually distinct.
std::vector<std::array<double, 3>> propose_encoded(const Posterior& posterior, double y_min,
                                                   int k, const AcquisitionConfig& cfg);

/// Convenience wrapper: cache the (G, x_A) context, propose, and decode with
/// the caller's solver tag.
std::vector<McmcParams> propose_batch(const SurrogateNet& net, const MatrixGraph& graph,
                                      const std::vector<double>& xa_raw, double y_min, int k,
                                      const AcquisitionConfig& cfg, SolverKind solver);

}  // namespace stoprec

#endif  // STOPREC_ACQUISITION_HPP
