/// @file krylov.hpp
/// @brief GMRES, BiCGStab and CG with optional left preconditioning and
/// exact iteration accounting.

#ifndef STOPREC_KRYLOV_HPP
#define STOPREC_KRYLOV_HPP

#include <string>
#include <vector>

#include "stoprec/sparse.hpp"

namespace stoprec {

enum class SolverKind { GMRES, BiCGStab, CG };

const char* to_string(SolverKind k);
SolverKind solver_from_string(const std::string& name);

struct SolverConfig {
    SolverKind solver = SolverKind::GMRES;
    double rel_tol = 1e-8;
    index_t max_iters = 0;  ///< 0 selects the default 10 * n
    index_t gmres_restart = 50;
};

enum class SolveStatus { Converged, MaxIterations, Breakdown, Divergence, Stagnation };

struct SolveResult {
    DenseVector x;
    index_t iterations = 0;
    bool converged = false;
    /// ||b - A x||_2 / ||b||_2 on the original (unpreconditioned) system.
    double final_rel_residual = 0.0;
    SolveStatus status = SolveStatus::MaxIterations;
    std::string detail;  ///< breakdown/divergence tag, empty when clean
    /// Per-iteration residual norms: the minimized least-squares estimate for
    /// GMRES (non-increasing within a restart cycle), the recursed residual
    /// for CG/BiCGStab. Normalized by ||b|| of the system the recursion runs
    /// on.
    std::vector<double> residual_history;
};

/// Solve A x = b starting from x0 = 0. When P is non-null the solver runs on
/// the left-preconditioned system P A x = P b, but convergence is always
/// declared on the true relative residual ||b - A x|| / ||b||, so iteration
/// counts are comparable across preconditioners at equal accuracy.
///
/// `iterations` counts Krylov steps: one per CG/BiCGStab iteration, one per
/// GMRES inner Arnoldi step (restarts do not reset the count).
SolveResult solve(const SparseMatrix& A, const DenseVector& b, const SparseMatrix* P,
                  const SolverConfig& cfg);

/// Preconditioning performance metric: steps_pre / steps_nopre.
double performance_metric(index_t steps_pre, index_t steps_nopre);

}  // namespace stoprec

#endif  // STOPREC_KRYLOV_HPP
