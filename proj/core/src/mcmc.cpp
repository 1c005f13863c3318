#include "stoprec/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "stoprec/parallel.hpp"
#include "stoprec/rng.hpp"

namespace stoprec {

SparseMatrix perturb(const SparseMatrix& A, double alpha) {
    if (A.nrows != A.ncols) throw std::invalid_argument("perturb: A must be square");
    if (!(alpha >= 0.0)) throw std::invalid_argument("perturb: alpha must be >= 0");
    SparseMatrix Ahat = A;
    for (index_t i = 0; i < A.nrows; ++i) {
        bool found = false;
        for (index_t k = Ahat.row_offsets[i]; k < Ahat.row_offsets[i + 1]; ++k) {
            if (Ahat.col_indices[k] == i) {
                Ahat.values[k] *= 1.0 + alpha;
                found = true;
                break;
            }
        }
        if (!found)
            throw std::invalid_argument("perturb: zero diagonal entry in row " +
                                        std::to_string(i));
    }
    return Ahat;
}

JacobiSplitting splitting(const SparseMatrix& Ahat) {
    const index_t n = Ahat.nrows;
    JacobiSplitting out;
    out.dinv.assign(n, 0.0);
    out.T.nrows = out.T.ncols = n;
    out.T.row_offsets.assign(n + 1, 0);
    out.T.col_indices.reserve(Ahat.nnz());
    out.T.values.reserve(Ahat.nnz());

    for (index_t i = 0; i < n; ++i) {
        double diag = 0.0;
        for (index_t k = Ahat.row_offsets[i]; k < Ahat.row_offsets[i + 1]; ++k)
            if (Ahat.col_indices[k] == i) diag = Ahat.values[k];
        if (diag == 0.0)
            throw std::invalid_argument("splitting: zero diagonal entry in row " +
                                        std::to_string(i));
        out.dinv[i] = 1.0 / diag;
        for (index_t k = Ahat.row_offsets[i]; k < Ahat.row_offsets[i + 1]; ++k) {
            const index_t j = Ahat.col_indices[k];
            if (j == i) continue;  // diagonal of T is exactly 0 and pruned
            const double t = -Ahat.values[k] * out.dinv[i];
            if (t == 0.0) continue;
            out.T.col_indices.push_back(j);
            out.T.values.push_back(t);
        }
        out.T.row_offsets[i + 1] = out.T.col_indices.size();
    }
    return out;
}

ChainBudget chain_budget(double epsilon, double delta, double t_inf_norm,
                         const McmcFixedSettings& fixed) {
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("chain_budget: epsilon must lie in (0,1]");
    if (!(delta > 0.0 && delta <= 1.0))
        throw std::invalid_argument("chain_budget: delta must lie in (0,1]");

    ChainBudget out;
    const double probable_error = 0.6745;  // 50% quantile of |N(0,1)|
    const double chains = std::ceil((probable_error / epsilon) * (probable_error / epsilon) -
                                    1e-12);
    out.n_chains = std::min<index_t>(fixed.chain_count_cap,
                                     std::max<index_t>(1, static_cast<index_t>(chains)));

    if (t_inf_norm >= 1.0) {
        out.max_len = fixed.walk_length_cap;
        out.degenerate = true;
    } else if (t_inf_norm <= 0.0 || delta >= 1.0) {
        out.max_len = 1;
    } else {
        const double len = std::ceil(std::log(delta) / std::log(t_inf_norm) - 1e-12);
        out.max_len = std::min<index_t>(fixed.walk_length_cap,
                                        std::max<index_t>(1, static_cast<index_t>(len)));
    }
    return out;
}

namespace {

struct RowEntry {
    index_t col;
    double value;
};

// Walk all chains for one row and return the sparsified preconditioner row.
void build_row(index_t row, const SparseMatrix& T, const DenseVector& row_abs_sum,
               const DenseVector& dinv, const ChainBudget& budget, double trunc,
               std::uint64_t seed, index_t row_keep, std::vector<double>& acc,
               std::vector<index_t>& touched, std::vector<RowEntry>& out) {
    touched.clear();
    auto visit = [&](index_t j, double w) {
        if (acc[j] == 0.0) touched.push_back(j);  // may re-push after exact cancellation
        acc[j] += w;
    };

    for (index_t chain = 0; chain < budget.n_chains; ++chain) {
        index_t state = row;
        double weight = 1.0;
        visit(state, weight);  // k = 0 term of the Neumann series
        for (index_t step = 1; step <= budget.max_len; ++step) {
            const index_t lo = T.row_offsets[state];
            const index_t hi = T.row_offsets[state + 1];
            if (lo == hi) break;  // absorbing state: empty row of T
            const double abs_sum = row_abs_sum[state];
            const double target =
                rng::uniform01(seed, rng::kWalk, static_cast<std::uint32_t>(row),
                               static_cast<std::uint32_t>(chain),
                               static_cast<std::uint32_t>(step)) *
                abs_sum;
            double cum = 0.0;
            index_t pick = hi - 1;
            for (index_t k = lo; k < hi; ++k) {
                cum += std::abs(T.values[k]);
                if (target < cum) {
                    pick = k;
                    break;
                }
            }
            // MAO weight update: t / p with p = |t| / abs_sum.
            weight *= T.values[pick] < 0.0 ? -abs_sum : abs_sum;
            state = T.col_indices[pick];
            visit(state, weight);
            if (std::abs(weight) < trunc) break;
        }
    }

    // Average over chains, apply Dhat^-1 on the right, drop exact zeros.
    const double inv_chains = 1.0 / static_cast<double>(budget.n_chains);
    std::vector<RowEntry> candidates;
    candidates.reserve(touched.size());
    std::sort(touched.begin(), touched.end());
    for (index_t j : touched) {
        const double v = acc[j] * inv_chains * dinv[j];
        acc[j] = 0.0;
        if (v != 0.0) candidates.push_back({j, v});
    }

    if (candidates.size() > row_keep) {
        std::sort(candidates.begin(), candidates.end(), [](const RowEntry& a, const RowEntry& b) {
            const double ma = std::abs(a.value), mb = std::abs(b.value);
            return ma != mb ? ma > mb : a.col < b.col;
        });
        bool diag_kept = false;
        for (index_t k = 0; k < row_keep; ++k)
            if (candidates[k].col == row) diag_kept = true;
        RowEntry diag_entry{row, 0.0};
        if (!diag_kept) {
            for (index_t k = row_keep; k < candidates.size(); ++k)
                if (candidates[k].col == row) diag_entry = candidates[k];
        }
        candidates.resize(row_keep);
        if (!diag_kept && diag_entry.value != 0.0) candidates.push_back(diag_entry);
        std::sort(candidates.begin(), candidates.end(),
                  [](const RowEntry& a, const RowEntry& b) { return a.col < b.col; });
    }
    out = std::move(candidates);
}

}  // namespace

PreconditionerBuildReport build_preconditioner(const SparseMatrix& A, const McmcParams& params,
                                               const McmcFixedSettings& fixed, int threads) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!(params.epsilon > 0.0 && params.epsilon <= 1.0))
        throw std::invalid_argument("build_preconditioner: epsilon must lie in (0,1]");
    if (!(params.delta > 0.0 && params.delta <= 1.0))
        throw std::invalid_argument("build_preconditioner: delta must lie in (0,1]");

    const index_t n = A.nrows;
    const SparseMatrix Ahat = perturb(A, params.alpha);
    const JacobiSplitting spl = splitting(Ahat);

    DenseVector row_abs_sum(n, 0.0);
    double t_inf = 0.0;
    for (index_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (index_t k = spl.T.row_offsets[i]; k < spl.T.row_offsets[i + 1]; ++k)
            s += std::abs(spl.T.values[k]);
        row_abs_sum[i] = s;
        t_inf = std::max(t_inf, s);
    }

    const ChainBudget budget = chain_budget(params.epsilon, params.delta, t_inf, fixed);

    const double keep = fixed.fill_factor_multiplier * A.fill_fraction() *
                        static_cast<double>(n);
    const index_t row_keep =
        keep >= static_cast<double>(n) ? n : std::max<index_t>(1, static_cast<index_t>(keep));

    std::vector<std::vector<RowEntry>> rows(n);
    parallel_for(0, n, threads, [&](int, std::size_t lo, std::size_t hi) {
        std::vector<double> acc(n, 0.0);
        std::vector<index_t> touched;
        for (std::size_t i = lo; i < hi; ++i)
            build_row(i, spl.T, row_abs_sum, spl.dinv, budget, fixed.truncation_threshold,
                      fixed.seed, row_keep, acc, touched, rows[i]);
    });

    PreconditionerBuildReport report;
    report.P.nrows = report.P.ncols = n;
    report.P.row_offsets.assign(n + 1, 0);
    index_t total = 0;
    for (index_t i = 0; i < n; ++i) total += rows[i].size();
    report.P.col_indices.reserve(total);
    report.P.values.reserve(total);
    for (index_t i = 0; i < n; ++i) {
        for (const RowEntry& e : rows[i]) {
            report.P.col_indices.push_back(e.col);
            report.P.values.push_back(e.value);
        }
        report.P.row_offsets[i + 1] = report.P.col_indices.size();
    }

    report.chains_per_row = budget.n_chains;
    report.max_walk_len = budget.max_len;
    report.spectral_bound = t_inf;
    report.degenerate = budget.degenerate;
    report.build_wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace stoprec
