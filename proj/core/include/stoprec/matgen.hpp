/// @file matgen.hpp
/// @brief Deterministic generators for the test-matrix families.

#ifndef STOPREC_MATGEN_HPP
#define STOPREC_MATGEN_HPP

#include <cstdint>

#include "stoprec/sparse.hpp"

namespace stoprec {

enum class MatrixFamily { Laplacian2D, AdvDiff2D, RandomDiagDominant };

struct GeneratorSpec {
    MatrixFamily family = MatrixFamily::Laplacian2D;
    index_t grid_param = 16;   ///< g for the grid families (dimension (g-1)^2),
                               ///< n for RandomDiagDominant
    double peclet = 0.0;       ///< AdvDiff2D only; 0 reduces to the Laplacian
    double density = 0.3;      ///< RandomDiagDominant only
    std::uint64_t seed = 0;    ///< RandomDiagDominant only
};

/// Standard 5-point stencil on the (g-1)x(g-1) interior grid with Dirichlet
/// boundary: 4 on the diagonal, -1 to grid neighbors. Symmetric positive
/// definite, g >= 4.
SparseMatrix gen_laplacian2d(index_t g);

/// 5-point diffusion plus first-order upwind advection with velocity
/// (peclet, peclet/2) on the unit square (coefficients scaled by the mesh
/// width h = 1/g), plus a unit-tau mass shift of h^2 on the diagonal
/// modelling the unsteady term. peclet = 0 reduces bitwise to
/// gen_laplacian2d(g); peclet > 0 yields a non-symmetric matrix.
SparseMatrix gen_advdiff2d(index_t g, double peclet);

/// Off-diagonals uniform in [-1,1] kept with probability `density`; the
/// diagonal is 2x the off-diagonal row abs sum plus 1, so
/// ||I - D^-1 A||_inf <= 0.5 by construction. Deterministic in `seed`.
SparseMatrix gen_random_diag_dominant(index_t n, double density, std::uint64_t seed);

SparseMatrix generate(const GeneratorSpec& spec);

const char* to_string(MatrixFamily f);
MatrixFamily family_from_string(const std::string& name);

/// 2-norm condition estimate: power iteration for the largest singular value
/// and inverse iteration (CG/GMRES inner solves on the normal equations) for
/// the smallest, `iterations` steps each. Ratios between related matrices
/// are meaningful; absolute values are estimates only.
double estimate_condition(const SparseMatrix& A, int iterations = 100);

}  // namespace stoprec

#endif  // STOPREC_MATGEN_HPP
