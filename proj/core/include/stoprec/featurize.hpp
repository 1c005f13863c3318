/// @file featurize.hpp
/// @brief Surrogate inputs: the weighted directed graph of A, cheap matrix
/// features, feature standardization and the x_M encoding.

#ifndef STOPREC_FEATURIZE_HPP
#define STOPREC_FEATURIZE_HPP

#include <array>
#include <vector>

#include "stoprec/mcmc.hpp"
#include "stoprec/sparse.hpp"

namespace stoprec {

struct GraphEdge {
    index_t src = 0;
    index_t dst = 0;
    double weight = 0.0;  ///< raw A_ij
};

/// Directed weighted graph of A: edge (i, j) iff A_ij != 0 (self-loops
/// included), node feature = unweighted row degree. Edge order is row-major
/// and deterministic.
struct MatrixGraph {
    index_t num_nodes = 0;
    std::vector<GraphEdge> edges;
    std::vector<double> node_feature;
};

inline constexpr std::size_t kMatrixFeatureDim = 7;
inline constexpr std::size_t kParamEncodingDim = 6;  // (alpha, ln eps, ln delta, one-hot solver)

/// Cheap O(nnz) global features of A.
struct MatrixFeatures {
    double one_norm = 0.0;
    double inf_norm = 0.0;
    double frob_norm = 0.0;
    double sparsity = 0.0;         ///< phi(A) = nnz / n^2
    double symmetric_flag = 0.0;   ///< 1 iff A == A^T exactly
    double asymmetry_ratio = 0.0;  ///< ||A - A^T||_F / (2 ||A||_F)
    double dimension_log = 0.0;    ///< ln n

    std::array<double, kMatrixFeatureDim> to_array() const {
        return {one_norm, inf_norm, frob_norm, sparsity, symmetric_flag, asymmetry_ratio,
                dimension_log};
    }
    std::vector<double> to_vector() const {
        const auto a = to_array();
        return {a.begin(), a.end()};
    }
};

/// Per-channel affine rescaling to zero mean, unit variance (population
/// statistics). Channels with zero variance keep std = 1 (shift only).
struct Standardizer {
    std::vector<double> means;
    std::vector<double> stds;
};

MatrixGraph build_graph(const SparseMatrix& A);
MatrixFeatures matrix_features(const SparseMatrix& A);

/// Fit on >= 2 sample rows (each of equal length).
Standardizer fit_standardizer(const std::vector<std::vector<double>>& samples);
std::vector<double> apply_standardizer(const Standardizer& st, const std::vector<double>& v);
std::vector<double> invert_standardizer(const Standardizer& st, const std::vector<double>& v);

/// (alpha, ln eps, ln delta, one-hot of {GMRES, BiCGStab, CG}).
std::vector<double> encode_params(const McmcParams& p);
McmcParams decode_params(const std::vector<double>& enc);

}  // namespace stoprec

#endif  // STOPREC_FEATURIZE_HPP
