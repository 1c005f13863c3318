#include "stoprec/matgen.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "stoprec/krylov.hpp"
#include "stoprec/rng.hpp"

namespace stoprec {

const char* to_string(MatrixFamily f) {
    switch (f) {
        case MatrixFamily::Laplacian2D: return "laplacian2d";
        case MatrixFamily::AdvDiff2D: return "advdiff2d";
        case MatrixFamily::RandomDiagDominant: return "randomdd";
    }
    return "?";
}

MatrixFamily family_from_string(const std::string& name) {
    if (name == "laplacian2d") return MatrixFamily::Laplacian2D;
    if (name == "advdiff2d") return MatrixFamily::AdvDiff2D;
    if (name == "randomdd" || name == "random_diag_dominant")
        return MatrixFamily::RandomDiagDominant;
    throw std::invalid_argument("unknown matrix family '" + name + "'");
}

SparseMatrix gen_laplacian2d(index_t g) {
    if (g < 4) throw std::invalid_argument("gen_laplacian2d: g must be >= 4");
    const index_t m = g - 1;
    const index_t n = m * m;
    std::vector<Triplet> entries;
    entries.reserve(5 * n);
    for (index_t r = 0; r < m; ++r) {
        for (index_t c = 0; c < m; ++c) {
            const index_t idx = r * m + c;
            if (r > 0) entries.push_back({idx, idx - m, -1.0});
            if (c > 0) entries.push_back({idx, idx - 1, -1.0});
            entries.push_back({idx, idx, 4.0});
            if (c + 1 < m) entries.push_back({idx, idx + 1, -1.0});
            if (r + 1 < m) entries.push_back({idx, idx + m, -1.0});
        }
    }
    return SparseMatrix::from_triplets(n, n, std::move(entries));
}

SparseMatrix gen_advdiff2d(index_t g, double peclet) {
    if (g < 4) throw std::invalid_argument("gen_advdiff2d: g must be >= 4");
    if (peclet < 0.0) throw std::invalid_argument("gen_advdiff2d: peclet must be >= 0");
    if (peclet == 0.0) return gen_laplacian2d(g);

    const double h = 1.0 / static_cast<double>(g);
    const double cx = peclet * h;        // upwind x-advection, velocity peclet
    const double cy = 0.5 * peclet * h;  // upwind y-advection, velocity peclet/2
    const double mass = h * h;           // unsteady shift I/tau, tau = 1
    const index_t m = g - 1;
    const index_t n = m * m;
    std::vector<Triplet> entries;
    entries.reserve(5 * n);
    for (index_t r = 0; r < m; ++r) {
        for (index_t c = 0; c < m; ++c) {
            const index_t idx = r * m + c;
            if (r > 0) entries.push_back({idx, idx - m, -1.0 - cy});
            if (c > 0) entries.push_back({idx, idx - 1, -1.0 - cx});
            entries.push_back({idx, idx, 4.0 + cx + cy + mass});
            if (c + 1 < m) entries.push_back({idx, idx + 1, -1.0});
            if (r + 1 < m) entries.push_back({idx, idx + m, -1.0});
        }
    }
    return SparseMatrix::from_triplets(n, n, std::move(entries));
}

SparseMatrix gen_random_diag_dominant(index_t n, double density, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_random_diag_dominant: n must be >= 2");
    if (!(density > 0.0 && density <= 1.0))
        throw std::invalid_argument("gen_random_diag_dominant: density must lie in (0,1]");
    std::vector<Triplet> entries;
    for (index_t i = 0; i < n; ++i) {
        double off_abs_sum = 0.0;
        for (index_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double keep = rng::uniform01(seed, rng::kMatGen,
                                               static_cast<std::uint32_t>(i),
                                               static_cast<std::uint32_t>(j), 0);
            if (keep >= density) continue;
            const double v = rng::uniform(seed, rng::kMatGen, static_cast<std::uint32_t>(i),
                                          static_cast<std::uint32_t>(j), 1, -1.0, 1.0);
            if (v == 0.0) continue;
            entries.push_back({i, j, v});
            off_abs_sum += std::abs(v);
        }
        entries.push_back({i, i, 2.0 * off_abs_sum + 1.0});
    }
    return SparseMatrix::from_triplets(n, n, std::move(entries));
}

SparseMatrix generate(const GeneratorSpec& spec) {
    switch (spec.family) {
        case MatrixFamily::Laplacian2D: return gen_laplacian2d(spec.grid_param);
        case MatrixFamily::AdvDiff2D: return gen_advdiff2d(spec.grid_param, spec.peclet);
        case MatrixFamily::RandomDiagDominant:
            return gen_random_diag_dominant(spec.grid_param, spec.density, spec.seed);
    }
    throw std::logic_error("generate: unreachable");
}

namespace {

bool bitwise_symmetric(const SparseMatrix& A) {
    if (A.nrows != A.ncols) return false;
    const SparseMatrix At = transpose(A);
    return At.row_offsets == A.row_offsets && At.col_indices == A.col_indices &&
           At.values == A.values;
}

DenseVector random_unit_vector(index_t n) {
    DenseVector v(n);
    for (index_t i = 0; i < n; ++i)
        v[i] = rng::normal(0x5eed, rng::kPowerIter, static_cast<std::uint32_t>(i), 0, 0);
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    return v;
}

void normalize(DenseVector& v) {
    const double nv = norm2(v);
    if (nv == 0.0) throw std::runtime_error("estimate_condition: zero iterate");
    for (double& x : v) x /= nv;
}

}  // namespace

double estimate_condition(const SparseMatrix& A, int iterations) {
    if (A.nrows != A.ncols) throw std::invalid_argument("estimate_condition: A must be square");
    const index_t n = A.nrows;
    const bool sym = bitwise_symmetric(A);

    SolverConfig inner;
    inner.solver = sym ? SolverKind::CG : SolverKind::GMRES;
    inner.rel_tol = 1e-10;
    inner.max_iters = 20 * n;

    const SparseMatrix At = sym ? SparseMatrix{} : transpose(A);

    double extreme_max = 0.0;
    {
        DenseVector v = random_unit_vector(n);
        DenseVector w(n), u(n);
        for (int it = 0; it < iterations; ++it) {
            spmv(A, v.data(), w.data());
            if (sym) {
                v = w;
            } else {
                spmv(At, w.data(), u.data());
                v = u;
            }
            normalize(v);
        }
        spmv(A, v.data(), w.data());
        extreme_max = sym ? std::abs(dot(v, w)) : norm2(w);
    }

    double extreme_min = 0.0;
    {
        DenseVector v = random_unit_vector(n);
        for (int it = 0; it < iterations; ++it) {
            DenseVector z;
            if (sym) {
                z = solve(A, v, nullptr, inner).x;
            } else {
                // (A^T A)^-1 v = A^-1 (A^T)^-1 v
                const DenseVector y = solve(At, v, nullptr, inner).x;
                z = solve(A, y, nullptr, inner).x;
            }
            v = std::move(z);
            normalize(v);
        }
        DenseVector w(n);
        spmv(A, v.data(), w.data());
        extreme_min = sym ? std::abs(dot(v, w)) : norm2(w);
    }
    if (extreme_min == 0.0) return std::numeric_limits<double>::infinity();
    return extreme_max / extreme_min;
}

}  // namespace stoprec
