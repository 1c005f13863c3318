/// @file mcmc.hpp
/// @brief Markov-chain Monte Carlo matrix inversion: builds the sparse
/// approximate-inverse preconditioner P ~= Ahat^-1 from random walks.
///
/// The scheme: perturb A to Ahat = A + alpha diag(A), split Ahat = Dhat(I - T),
/// estimate rows of (I - T)^-1 = sum_k T^k by almost-optimal random walks, and
/// scale by Dhat^-1 on the right. epsilon sizes the number of independent
/// chains per row, delta the maximum walk length.

#ifndef STOPREC_MCMC_HPP
#define STOPREC_MCMC_HPP

#include <cstdint>

#include "stoprec/krylov.hpp"
#include "stoprec/sparse.hpp"

namespace stoprec {

/// The tunable vector x_M = (alpha, epsilon, delta) plus the solver tag.
struct McmcParams {
    double alpha = 1.0;    ///< > 0: diagonal perturbation strength
    double epsilon = 0.5;  ///< (0,1]: stochastic-error budget (chain count)
    double delta = 0.5;    ///< (0,1]: truncation-error budget (walk length)
    SolverKind solver = SolverKind::GMRES;
};

/// Matrix-independent settings held fixed during tuning.
struct McmcFixedSettings {
    double fill_factor_multiplier = 2.0;  ///< preconditioner fill = 2 phi(A)
    double truncation_threshold = 1e-9;   ///< walk stops when |W| drops below
    index_t chain_count_cap = 1'000'000;  ///< per row
    index_t walk_length_cap = 10'000;
    std::uint64_t seed = 0;
};

struct ChainBudget {
    index_t n_chains = 1;
    index_t max_len = 1;
    bool degenerate = false;  ///< ||T||_inf >= 1: walk length pinned at the cap
};

struct PreconditionerBuildReport {
    SparseMatrix P;
    index_t chains_per_row = 0;
    index_t max_walk_len = 0;
    double spectral_bound = 0.0;  ///< ||T||_inf
    double build_wall_seconds = 0.0;
    bool degenerate = false;  ///< Neumann series not guaranteed convergent
};

/// Ahat = A + alpha diag(A). Throws if any diagonal entry is zero or absent,
/// naming the row.
SparseMatrix perturb(const SparseMatrix& A, double alpha);

struct JacobiSplitting {
    DenseVector dinv;  ///< 1 / ahat_ii
    SparseMatrix T;    ///< I - Dhat^-1 Ahat, zero diagonal pruned
};

JacobiSplitting splitting(const SparseMatrix& Ahat);

/// Chain count ceil((0.6745/eps)^2) and walk length ceil(log delta / log
/// ||T||_inf), both clipped by the caps; ||T||_inf >= 1 pins the length at
/// the cap and sets the degenerate flag.
ChainBudget chain_budget(double epsilon, double delta, double t_inf_norm,
                         const McmcFixedSettings& fixed);

/// Build the preconditioner. Deterministic in (A, params, fixed.seed) and
/// independent of `threads`: every walk draws from a counter-based stream
/// keyed by (seed, row, chain, step).
PreconditionerBuildReport build_preconditioner(const SparseMatrix& A, const McmcParams& params,
                                               const McmcFixedSettings& fixed, int threads = 1);

}  // namespace stoprec

#endif  // STOPREC_MCMC_HPP
