#include "stoprec/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stoprec {

const char* to_string(SolverKind k) {
    switch (k) {
        case SolverKind::GMRES: return "gmres";
        case SolverKind::BiCGStab: return "bicgstab";
        case SolverKind::CG: return "cg";
    }
    return "?";
}

SolverKind solver_from_string(const std::string& name) {
    if (name == "gmres" || name == "GMRES") return SolverKind::GMRES;
    if (name == "bicgstab" || name == "BiCGStab") return SolverKind::BiCGStab;
    if (name == "cg" || name == "CG") return SolverKind::CG;
    throw std::invalid_argument("unknown solver '" + name + "'");
}

namespace {

bool finite(const DenseVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// y = P (A x) when P is present, else y = A x.
void apply_op(const SparseMatrix& A, const SparseMatrix* P, const DenseVector& x,
              DenseVector& tmp, DenseVector& y) {
    if (P) {
        spmv(A, x.data(), tmp.data());
        spmv(*P, tmp.data(), y.data());
    } else {
        spmv(A, x.data(), y.data());
    }
}

double true_rel_residual(const SparseMatrix& A, const DenseVector& b, const DenseVector& x,
                         double bnorm, DenseVector& tmp) {
    spmv(A, x.data(), tmp.data());
    double s = 0.0;
    for (index_t i = 0; i < b.size(); ++i) {
        const double d = b[i] - tmp[i];
        s += d * d;
    }
    return std::sqrt(s) / bnorm;
}

SolveResult solve_cg(const SparseMatrix& A, const DenseVector& b, const SparseMatrix* P,
                     const SolverConfig& cfg, index_t max_iters, double bnorm) {
    const index_t n = b.size();
    SolveResult res;
    res.x.assign(n, 0.0);

    DenseVector r = b, z(n), p(n), q(n), tmp(n);
    if (P)
        spmv(*P, r.data(), z.data());
    else
        z = r;
    p = z;
    double rho = dot(r, z);
    if (rho <= 0.0) {
        res.status = SolveStatus::Breakdown;
        res.detail = "precond_indefinite";
        res.final_rel_residual = 1.0;
        return res;
    }

    for (index_t it = 1; it <= max_iters; ++it) {
        spmv(A, p.data(), q.data());
        const double gamma = dot(p, q);
        if (!std::isfinite(gamma)) {
            res.status = SolveStatus::Divergence;
            res.detail = "nonfinite_iterate";
            res.iterations = it;
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        if (gamma <= 0.0) {
            res.status = SolveStatus::Breakdown;
            res.detail = "indefinite_operator";
            res.iterations = it;
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        const double alpha = rho / gamma;
        for (index_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        const double rn = norm2(r) / bnorm;
        res.residual_history.push_back(rn);
        if (!std::isfinite(rn)) {
            res.status = SolveStatus::Divergence;
            res.detail = "nonfinite_iterate";
            res.iterations = it;
            res.final_rel_residual = rn;
            return res;
        }
        if (rn <= cfg.rel_tol) {
            const double tr = true_rel_residual(A, b, res.x, bnorm, tmp);
            if (tr <= cfg.rel_tol) {
                res.converged = true;
                res.status = SolveStatus::Converged;
                res.iterations = it;
                res.final_rel_residual = tr;
                return res;
            }
            if (rn < 1e-14) {  // recursion exhausted but true residual stuck
                res.status = SolveStatus::Stagnation;
                res.detail = "residual_stagnation";
                res.iterations = it;
                res.final_rel_residual = tr;
                return res;
            }
        }
        if (P)
            spmv(*P, r.data(), z.data());
        else
            z = r;
        const double rho_new = dot(r, z);
        if (rho_new <= 0.0) {
            res.status = SolveStatus::Breakdown;
            res.detail = "precond_indefinite";
            res.iterations = it;
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        const double beta = rho_new / rho;
        rho = rho_new;
        for (index_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        res.iterations = it;
    }
    res.status = SolveStatus::MaxIterations;
    res.iterations = max_iters;
    res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
    return res;
}

SolveResult solve_bicgstab(const SparseMatrix& A, const DenseVector& b, const SparseMatrix* P,
                           const SolverConfig& cfg, index_t max_iters, double bnorm) {
    const index_t n = b.size();
    SolveResult res;
    res.x.assign(n, 0.0);
    DenseVector tmp(n);

    DenseVector c = b;
    if (P) spmv(*P, b.data(), c.data());
    const double cnorm = norm2(c);
    if (cnorm == 0.0) {
        // P b = 0 with b != 0: the preconditioned system carries no signal.
        res.status = SolveStatus::Breakdown;
        res.detail = "precond_annihilates_rhs";
        res.final_rel_residual = 1.0;
        return res;
    }

    DenseVector r = c, rt = c, p(n, 0.0), v(n, 0.0), s(n), t(n);
    double rho = 1.0, alpha = 1.0, omega = 1.0;

    for (index_t it = 1; it <= max_iters; ++it) {
        res.iterations = it;
        const double rho_new = dot(rt, r);
        if (std::abs(rho_new) < 1e-300) {
            res.status = SolveStatus::Breakdown;
            res.detail = "rho_breakdown";
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        if (it == 1) {
            p = r;
        } else {
            const double beta = (rho_new / rho) * (alpha / omega);
            for (index_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho_new;
        apply_op(A, P, p, tmp, v);
        const double denom = dot(rt, v);
        if (std::abs(denom) < 1e-300) {
            res.status = SolveStatus::Breakdown;
            res.detail = "alpha_breakdown";
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        alpha = rho / denom;
        for (index_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];

        if (norm2(s) / cnorm <= cfg.rel_tol) {  // half-step convergence candidate
            for (index_t i = 0; i < n; ++i) res.x[i] += alpha * p[i];
            const double tr = true_rel_residual(A, b, res.x, bnorm, tmp);
            res.residual_history.push_back(norm2(s) / cnorm);
            if (tr <= cfg.rel_tol) {
                res.converged = true;
                res.status = SolveStatus::Converged;
                res.final_rel_residual = tr;
                return res;
            }
            r = s;  // keep iterating from the half step
            omega = 1.0;
            continue;
        }

        apply_op(A, P, s, tmp, t);
        const double tt = dot(t, t);
        if (tt == 0.0) {
            res.status = SolveStatus::Breakdown;
            res.detail = "omega_breakdown";
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        omega = dot(t, s) / tt;
        for (index_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        const double rn = norm2(r) / cnorm;
        res.residual_history.push_back(rn);
        if (!std::isfinite(rn) || !finite(res.x)) {
            res.status = SolveStatus::Divergence;
            res.detail = "nonfinite_iterate";
            res.final_rel_residual = std::isfinite(rn) ? rn : std::numeric_limits<double>::infinity();
            return res;
        }
        if (rn <= cfg.rel_tol) {
            const double tr = true_rel_residual(A, b, res.x, bnorm, tmp);
            if (tr <= cfg.rel_tol) {
                res.converged = true;
                res.status = SolveStatus::Converged;
                res.final_rel_residual = tr;
                return res;
            }
            if (rn < 1e-14) {
                res.status = SolveStatus::Stagnation;
                res.detail = "residual_stagnation";
                res.final_rel_residual = tr;
                return res;
            }
        }
        if (std::abs(omega) < 1e-300) {
            res.status = SolveStatus::Breakdown;
            res.detail = "omega_breakdown";
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
    }
    res.status = SolveStatus::MaxIterations;
    res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
    return res;
}

SolveResult solve_gmres(const SparseMatrix& A, const DenseVector& b, const SparseMatrix* P,
                        const SolverConfig& cfg, index_t max_iters, double bnorm) {
    const index_t n = b.size();
    const index_t m = std::max<index_t>(1, cfg.gmres_restart);
    SolveResult res;
    res.x.assign(n, 0.0);

    DenseVector c = b, tmp(n);
    if (P) spmv(*P, b.data(), c.data());
    const double cnorm = norm2(c);
    if (cnorm == 0.0) {
        res.status = SolveStatus::Breakdown;
        res.detail = "precond_annihilates_rhs";
        res.final_rel_residual = 1.0;
        return res;
    }

    std::vector<DenseVector> V(m + 1, DenseVector(n));
    std::vector<DenseVector> H(m);  // column j holds j+2 entries
    DenseVector cs(m), sn(m), g(m + 1), y(m), w(n), r0(n), xc(n);

    while (true) {
        // r0 = c - (PA) x
        apply_op(A, P, res.x, tmp, r0);
        for (index_t i = 0; i < n; ++i) r0[i] = c[i] - r0[i];
        const double beta = norm2(r0);
        if (beta / cnorm < 1e-16) {
            const double tr = true_rel_residual(A, b, res.x, bnorm, tmp);
            res.final_rel_residual = tr;
            if (tr <= cfg.rel_tol) {
                res.converged = true;
                res.status = SolveStatus::Converged;
            } else {
                res.status = SolveStatus::Stagnation;
                res.detail = "preconditioned_residual_exhausted";
            }
            return res;
        }
        for (index_t i = 0; i < n; ++i) V[0][i] = r0[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;

        index_t j = 0;
        bool happy = false;
        for (; j < m; ++j) {
            ++res.iterations;
            apply_op(A, P, V[j], tmp, w);
            // Modified Gram-Schmidt with one re-orthogonalization pass.
            H[j].assign(j + 2, 0.0);
            for (int pass = 0; pass < 2; ++pass) {
                for (index_t i = 0; i <= j; ++i) {
                    const double hij = dot(w, V[i]);
                    H[j][i] += hij;
                    for (index_t q = 0; q < n; ++q) w[q] -= hij * V[i][q];
                }
            }
            const double hnext = norm2(w);
            H[j][j + 1] = hnext;
            happy = hnext < 1e-14 * beta;
            if (!happy)
                for (index_t q = 0; q < n; ++q) V[j + 1][q] = w[q] / hnext;

            // Apply stored Givens rotations, then form the new one.
            for (index_t i = 0; i < j; ++i) {
                const double t0 = cs[i] * H[j][i] + sn[i] * H[j][i + 1];
                const double t1 = -sn[i] * H[j][i] + cs[i] * H[j][i + 1];
                H[j][i] = t0;
                H[j][i + 1] = t1;
            }
            const double denom = std::hypot(H[j][j], H[j][j + 1]);
            cs[j] = denom == 0.0 ? 1.0 : H[j][j] / denom;
            sn[j] = denom == 0.0 ? 0.0 : H[j][j + 1] / denom;
            H[j][j] = denom;
            H[j][j + 1] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            const double est = std::abs(g[j + 1]) / cnorm;
            res.residual_history.push_back(est);
            if (!std::isfinite(est)) {
                res.status = SolveStatus::Divergence;
                res.detail = "nonfinite_iterate";
                res.final_rel_residual = est;
                return res;
            }

            // Candidate solution and its true residual.
            for (index_t i = 0; i <= j; ++i) y[i] = g[i];
            for (index_t i = j + 1; i-- > 0;) {
                for (index_t k2 = i + 1; k2 <= j; ++k2) y[i] -= H[k2][i] * y[k2];
                y[i] /= H[i][i];
            }
            xc = res.x;
            for (index_t i = 0; i <= j; ++i)
                for (index_t q = 0; q < n; ++q) xc[q] += y[i] * V[i][q];
            const double tr = true_rel_residual(A, b, xc, bnorm, tmp);
            if (tr <= cfg.rel_tol) {
                res.x = xc;
                res.converged = true;
                res.status = SolveStatus::Converged;
                res.final_rel_residual = tr;
                return res;
            }
            if (res.iterations >= max_iters) {
                res.x = xc;
                res.status = SolveStatus::MaxIterations;
                res.final_rel_residual = tr;
                return res;
            }
            if (happy) break;
        }
        // Restart from the best point of this cycle.
        double delta = 0.0;
        for (index_t q = 0; q < n; ++q) delta += (xc[q] - res.x[q]) * (xc[q] - res.x[q]);
        if (happy && delta == 0.0) {
            res.status = SolveStatus::Stagnation;
            res.detail = "subspace_exhausted";
            res.final_rel_residual = true_rel_residual(A, b, res.x, bnorm, tmp);
            return res;
        }
        res.x = xc;
    }
}

}  // namespace

SolveResult solve(const SparseMatrix& A, const DenseVector& b, const SparseMatrix* P,
                  const SolverConfig& cfg) {
    if (A.nrows != A.ncols) throw std::invalid_argument("solve: A must be square");
    if (b.size() != A.nrows) throw std::invalid_argument("solve: len(b) != n");
    if (P && (P->nrows != A.nrows || P->ncols != A.ncols))
        throw std::invalid_argument("solve: preconditioner shape mismatch");
    if (!(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0))
        throw std::invalid_argument("solve: rel_tol must lie in (0,1)");

    const index_t n = A.nrows;
    const index_t max_iters = cfg.max_iters > 0 ? cfg.max_iters : 10 * n;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        SolveResult res;
        res.x.assign(n, 0.0);
        res.converged = true;
        res.status = SolveStatus::Converged;
        res.final_rel_residual = 0.0;
        return res;
    }
    switch (cfg.solver) {
        case SolverKind::CG: return solve_cg(A, b, P, cfg, max_iters, bnorm);
        case SolverKind::BiCGStab: return solve_bicgstab(A, b, P, cfg, max_iters, bnorm);
        case SolverKind::GMRES: return solve_gmres(A, b, P, cfg, max_iters, bnorm);
    }
    throw std::logic_error("solve: unreachable");
}

double performance_metric(index_t steps_pre, index_t steps_nopre) {
    if (steps_nopre == 0)
        throw std::invalid_argument("performance_metric: unpreconditioned step count is zero");
    return static_cast<double>(steps_pre) / static_cast<double>(steps_nopre);
}

}  // namespace stoprec
