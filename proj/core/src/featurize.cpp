#include "stoprec/featurize.hpp"

#include <cmath>
#include <stdexcept>

namespace stoprec {

MatrixGraph build_graph(const SparseMatrix& A) {
    MatrixGraph g;
    g.num_nodes = A.nrows;
    g.edges.reserve(A.nnz());
    g.node_feature.resize(A.nrows);
    for (index_t i = 0; i < A.nrows; ++i) {
        g.node_feature[i] = static_cast<double>(A.row_offsets[i + 1] - A.row_offsets[i]);
        for (index_t k = A.row_offsets[i]; k < A.row_offsets[i + 1]; ++k)
            g.edges.push_back({i, A.col_indices[k], A.values[k]});
    }
    return g;
}

MatrixFeatures matrix_features(const SparseMatrix& A) {
    MatrixFeatures f;
    const MatrixNorms nm = norms(A);
    f.one_norm = nm.one_norm;
    f.inf_norm = nm.inf_norm;
    f.frob_norm = nm.frob_norm;
    f.sparsity = A.fill_fraction();
    f.dimension_log = std::log(static_cast<double>(A.nrows));

    // ||A - A^T||_F in one merge pass over A and A^T rows.
    const SparseMatrix At = transpose(A);
    double diff_sq = 0.0;
    for (index_t i = 0; i < A.nrows; ++i) {
        index_t ka = A.row_offsets[i], ea = A.row_offsets[i + 1];
        index_t kt = At.row_offsets[i], et = At.row_offsets[i + 1];
        while (ka < ea || kt < et) {
            if (kt == et || (ka < ea && A.col_indices[ka] < At.col_indices[kt])) {
                diff_sq += A.values[ka] * A.values[ka];
                ++ka;
            } else if (ka == ea || At.col_indices[kt] < A.col_indices[ka]) {
                diff_sq += At.values[kt] * At.values[kt];
                ++kt;
            } else {
                const double d = A.values[ka] - At.values[kt];
                diff_sq += d * d;
                ++ka;
                ++kt;
            }
        }
    }
    f.asymmetry_ratio = f.frob_norm > 0.0 ? std::sqrt(diff_sq) / (2.0 * f.frob_norm) : 0.0;
    f.symmetric_flag = diff_sq == 0.0 ? 1.0 : 0.0;
    return f;
}

Standardizer fit_standardizer(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("fit_standardizer: need at least 2 samples");
    const std::size_t dim = samples.front().size();
    for (const auto& s : samples)
        if (s.size() != dim)
            throw std::invalid_argument("fit_standardizer: ragged sample rows");

    Standardizer st;
    st.means.assign(dim, 0.0);
    st.stds.assign(dim, 0.0);
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (const auto& s : samples)
        for (std::size_t c = 0; c < dim; ++c) st.means[c] += s[c];
    for (double& m : st.means) m *= inv_n;
    for (const auto& s : samples)
        for (std::size_t c = 0; c < dim; ++c) {
            const double d = s[c] - st.means[c];
            st.stds[c] += d * d;
        }
    for (double& v : st.stds) {
        v = std::sqrt(v * inv_n);  // population std
        if (v == 0.0) v = 1.0;     // constant channel: shift only
    }
    return st;
}

std::vector<double> apply_standardizer(const Standardizer& st, const std::vector<double>& v) {
    if (v.size() != st.means.size())
        throw std::invalid_argument("apply_standardizer: dimension mismatch");
    std::vector<double> out(v.size());
    for (std::size_t c = 0; c < v.size(); ++c) out[c] = (v[c] - st.means[c]) / st.stds[c];
    return out;
}

std::vector<double> invert_standardizer(const Standardizer& st, const std::vector<double>& v) {
    if (v.size() != st.means.size())
        throw std::invalid_argument("invert_standardizer: dimension mismatch");
    std::vector<double> out(v.size());
    for (std::size_t c = 0; c < v.size(); ++c) out[c] = v[c] * st.stds[c] + st.means[c];
    return out;
}

std::vector<double> encode_params(const McmcParams& p) {
    std::vector<double> enc(kParamEncodingDim, 0.0);
    enc[0] = p.alpha;
    enc[1] = std::log(p.epsilon);
    enc[2] = std::log(p.delta);
    switch (p.solver) {
        case SolverKind::GMRES: enc[3] = 1.0; break;
        case SolverKind::BiCGStab: enc[4] = 1.0; break;
        case SolverKind::CG: enc[5] = 1.0; break;
    }
    return enc;
}

McmcParams decode_params(const std::vector<double>& enc) {
    if (enc.size() != kParamEncodingDim)
        throw std::invalid_argument("decode_params: expected 6 entries");
    McmcParams p;
    p.alpha = enc[0];
    p.epsilon = std::exp(enc[1]);
    p.delta = std::exp(enc[2]);
    if (enc[3] >= enc[4] && enc[3] >= enc[5])
        p.solver = SolverKind::GMRES;
    else if (enc[4] >= enc[5])
        p.solver = SolverKind::BiCGStab;
    else
        p.solver = SolverKind::CG;
    return p;
}

}  // namespace stoprec
