/// @file surrogate.hpp
/// @brief Graph-neural surrogate f_theta: (G, x_A, x_M) -> (mu_hat,
/// sigma_hat) with analytic gradients.
///
/// Architecture: EdgeConv message passing (mean aggregation) over the matrix
/// graph, FC stacks for x_A and x_M, a fused FC stack with dropout, and two
/// linear heads (ReLU for the mean, softplus for the standard deviation).
/// Layer normalization and ReLU follow every linear transform. All gradients
/// are hand-derived; training uses Adam with decoupled weight decay.

#ifndef STOPREC_SURROGATE_HPP
#define STOPREC_SURROGATE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stoprec/featurize.hpp"

namespace stoprec {

struct SurrogateConfig {
    index_t graph_hidden = 256;
    index_t graph_layers = 1;
    index_t xa_layers = 1;
    index_t xa_hidden = 64;
    index_t xm_layers = 3;
    index_t xm_hidden = 16;
    index_t combined_layers = 2;
    index_t combined_hidden = 128;
    double dropout = 0.1;
    double learn_rate = 1.848e-3;
    double weight_decay = 1e-4;
    index_t batch_size = 128;
    index_t max_epochs = 150;
    index_t patience = 20;  ///< early-stopping grace period (epochs)
    std::uint64_t seed = 0;
};

struct LinearLayer {
    index_t in = 0;
    index_t out = 0;
    std::vector<double> W;  ///< row-major, out x in
    std::vector<double> b;  ///< out
};

struct LayerNorm {
    std::vector<double> gamma;
    std::vector<double> beta;
};

/// Linear -> LayerNorm -> ReLU, repeated.
struct DenseStack {
    std::vector<LinearLayer> linear;
    std::vector<LayerNorm> norm;
};

/// Graph tensors ready for the network: edge weights scaled per graph by
/// sqrt(nnz)/||A||_F, node degrees standardized with the net's node
/// standardizer, edges grouped by source node.
struct PreparedGraph {
    index_t num_nodes = 0;
    std::vector<index_t> src;
    std::vector<index_t> dst;
    std::vector<double> weight;
    std::vector<double> node_feat;
    std::vector<index_t> out_degree;
};

struct Prediction {
    double mu_hat = 0.0;     ///< >= 0 (ReLU head)
    double sigma_hat = 0.0;  ///< > 0 (softplus head)
};

struct SurrogateNet {
    SurrogateConfig config;
    std::vector<LinearLayer> gnn_msg;  ///< per layer: (2 d_in + 1) -> hidden
    std::vector<LayerNorm> gnn_norm;
    DenseStack xa_stack;
    DenseStack xm_stack;
    DenseStack comb_stack;
    LinearLayer head_mu;
    LinearLayer head_sigma;
    Standardizer st_xa;
    Standardizer st_xm;
    Standardizer st_node;

    /// Fresh random weights drawn from config.seed (He initialization);
    /// standardizers start as identity and are fitted by train().
    static SurrogateNet init(const SurrogateConfig& cfg);
};

/// One labelled datum as consumed by training: the graph pointer is shared
/// across samples of the same matrix (matrix_id is the grouping key).
struct TrainSample {
    const MatrixGraph* graph = nullptr;
    std::string matrix_id;
    std::vector<double> xa;      ///< raw matrix features
    std::vector<double> xm_enc;  ///< raw encode_params output
    double y_mean = 0.0;
    double y_std = 0.0;
};

PreparedGraph prepare_graph(const MatrixGraph& g, const Standardizer& node_st);

/// Forward pass on standardized inputs. Dropout is active only when
/// `training` is set; masks are drawn from (config.seed, dropout_salt), so
/// inference is deterministic.
Prediction forward(const SurrogateNet& net, const PreparedGraph& g,
                   const std::vector<double>& xa_std, const std::vector<double>& xm_std,
                   bool training = false, std::uint64_t dropout_salt = 0);

/// Convenience: standardize raw inputs with the net's fitted standardizers.
Prediction predict(const SurrogateNet& net, const MatrixGraph& g,
                   const std::vector<double>& xa_raw, const McmcParams& xm);

/// Per-matrix cache: the graph and x_A branches do not depend on x_M, so
/// acquisition evaluates them once.
struct GraphContext {
    std::vector<double> h_g;
    std::vector<double> h_a;
};

GraphContext make_context(const SurrogateNet& net, const PreparedGraph& g,
                          const std::vector<double>& xa_std);
Prediction predict_with_context(const SurrogateNet& net, const GraphContext& ctx,
                                const std::vector<double>& xm_std);

/// Prediction plus d mu / d xm_std and d sigma / d xm_std (for EI gradients).
struct XmSensitivity {
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<double> dmu;
    std::vector<double> dsigma;
};

XmSensitivity xm_gradient(const SurrogateNet& net, const GraphContext& ctx,
                          const std::vector<double>& xm_std);

/// Mean over the batch of (mu_hat - y_mean)^2 + (sigma_hat - y_std)^2.
double loss(const SurrogateNet& net, const std::vector<TrainSample>& batch,
            bool training = false, std::uint64_t dropout_salt = 0);

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    index_t best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Fits the standardizers on the 80% training split, trains with Adam
/// (decoupled weight decay), early-stops on validation loss with
/// config.patience, and restores the best-validation weights.
TrainHistory train(SurrogateNet& net, const std::vector<TrainSample>& data);

/// Max relative error between analytic gradients and central finite
/// differences (step 1e-6) over `probe_count` randomly chosen parameters,
/// plus all x_M input gradients. Dropout off.
double grad_check(const SurrogateNet& net, const TrainSample& sample, int probe_count);

void save_checkpoint(const SurrogateNet& net, const std::string& path);
SurrogateNet load_checkpoint(const std::string& path);

}  // namespace stoprec

#endif  // STOPREC_SURROGATE_HPP
