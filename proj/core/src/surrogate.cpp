#include "stoprec/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stoprec/rng.hpp"

namespace stoprec {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kSigmaFloor = 1e-12;

double softplus(double z) {
    if (z > 30.0) return z;
    if (z < -30.0) return std::exp(z);
    return std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Tensor enumeration: the single source of truth for parameter order, used by
// Adam, grad_check, flatten and serialization.
// ---------------------------------------------------------------------------

template <typename Net, typename F>
void for_each_tensor_impl(Net& net, F&& f) {
    for (std::size_t l = 0; l < net.gnn_msg.size(); ++l) {
        const std::string p = "gnn" + std::to_string(l);
        f(p + ".W", net.gnn_msg[l].W);
        f(p + ".b", net.gnn_msg[l].b);
        f(p + ".gamma", net.gnn_norm[l].gamma);
        f(p + ".beta", net.gnn_norm[l].beta);
    }
    auto stack = [&f](const std::string& name, auto& st) {
        for (std::size_t l = 0; l < st.linear.size(); ++l) {
            const std::string p = name + std::to_string(l);
            f(p + ".W", st.linear[l].W);
            f(p + ".b", st.linear[l].b);
            f(p + ".gamma", st.norm[l].gamma);
            f(p + ".beta", st.norm[l].beta);
        }
    };
    stack("xa", net.xa_stack);
    stack("xm", net.xm_stack);
    stack("comb", net.comb_stack);
    f("head_mu.W", net.head_mu.W);
    f("head_mu.b", net.head_mu.b);
    f("head_sigma.W", net.head_sigma.W);
    f("head_sigma.b", net.head_sigma.b);
}

template <typename F>
void for_each_tensor(SurrogateNet& net, F&& f) {
    for_each_tensor_impl(net, std::forward<F>(f));
}
template <typename F>
void for_each_tensor(const SurrogateNet& net, F&& f) {
    for_each_tensor_impl(net, std::forward<F>(f));
}

std::size_t total_params(const SurrogateNet& net) {
    std::size_t n = 0;
    for_each_tensor(net, [&n](const std::string&, const std::vector<double>& t) { n += t.size(); });
    return n;
}

SurrogateNet zero_like(const SurrogateNet& net) {
    SurrogateNet g = net;
    for_each_tensor(g, [](const std::string&, std::vector<double>& t) {
        std::fill(t.begin(), t.end(), 0.0);
    });
    return g;
}

// ---------------------------------------------------------------------------
// Primitive forward/backward blocks
// ---------------------------------------------------------------------------

void linear_forward(const LinearLayer& lin, const double* x, double* y) {
    for (index_t r = 0; r < lin.out; ++r) {
        double s = lin.b[r];
        const double* w = lin.W.data() + r * lin.in;
        for (index_t c = 0; c < lin.in; ++c) s += w[c] * x[c];
        y[r] = s;
    }
}

// dx += W^T dy; optionally accumulates dW += dy x^T, db += dy.
void linear_backward(const LinearLayer& lin, const double* x, const double* dy, double* dx,
                     LinearLayer* grad) {
    if (grad) {
        for (index_t r = 0; r < lin.out; ++r) {
            double* gw = grad->W.data() + r * lin.in;
            for (index_t c = 0; c < lin.in; ++c) gw[c] += dy[r] * x[c];
            grad->b[r] += dy[r];
        }
    }
    if (dx) {
        for (index_t r = 0; r < lin.out; ++r) {
            const double* w = lin.W.data() + r * lin.in;
            for (index_t c = 0; c < lin.in; ++c) dx[c] += w[c] * dy[r];
        }
    }
}

struct LnCache {
    double mean = 0.0;
    double s = 1.0;  // sqrt(var + eps)
};

LnCache ln_forward(const LayerNorm& ln, const double* x, double* y, std::size_t d) {
    LnCache c;
    for (std::size_t i = 0; i < d; ++i) c.mean += x[i];
    c.mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double t = x[i] - c.mean;
        var += t * t;
    }
    var /= static_cast<double>(d);
    c.s = std::sqrt(var + kLnEps);
    for (std::size_t i = 0; i < d; ++i)
        y[i] = ln.gamma[i] * (x[i] - c.mean) / c.s + ln.beta[i];
    return c;
}

// dx += backprop of dy through LN(x); optionally accumulates dgamma, dbeta.
void ln_backward(const LayerNorm& ln, const double* x, const LnCache& c, const double* dy,
                 double* dx, LayerNorm* grad, std::size_t d) {
    const double inv_d = 1.0 / static_cast<double>(d);
    double dvar = 0.0, dmean = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double xc = x[i] - c.mean;
        const double dxhat = dy[i] * ln.gamma[i];
        dvar += dxhat * xc;
        dmean += dxhat;
        if (grad) {
            grad->gamma[i] += dy[i] * xc / c.s;
            grad->beta[i] += dy[i];
        }
    }
    dvar *= -0.5 / (c.s * c.s * c.s);
    dmean *= -1.0 / c.s;
    for (std::size_t i = 0; i < d; ++i) {
        const double xc = x[i] - c.mean;
        dx[i] += dy[i] * ln.gamma[i] / c.s + dvar * 2.0 * xc * inv_d + dmean * inv_d;
    }
}

// ---------------------------------------------------------------------------
// Dense stacks
// ---------------------------------------------------------------------------

struct StackTrace {
    std::vector<std::vector<double>> input;   // per layer
    std::vector<std::vector<double>> preact;  // W x + b
    std::vector<LnCache> ln;
    std::vector<std::vector<double>> lnout;
    std::vector<std::vector<double>> mask;  // dropout multipliers, empty if off
    std::vector<double> out;                // final activation
};

struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t salt = 0;
    double rate = 0.0;
};

void stack_forward(const DenseStack& st, std::vector<double> x, StackTrace& tr,
                   const DropoutKey* drop) {
    const std::size_t L = st.linear.size();
    tr.input.resize(L);
    tr.preact.resize(L);
    tr.ln.resize(L);
    tr.lnout.resize(L);
    tr.mask.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
        tr.input[l] = x;
        const std::size_t d = st.linear[l].out;
        tr.preact[l].assign(d, 0.0);
        linear_forward(st.linear[l], x.data(), tr.preact[l].data());
        tr.lnout[l].assign(d, 0.0);
        tr.ln[l] = ln_forward(st.norm[l], tr.preact[l].data(), tr.lnout[l].data(), d);
        x.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) x[i] = tr.lnout[l][i] > 0.0 ? tr.lnout[l][i] : 0.0;
        if (drop && drop->rate > 0.0) {
            tr.mask[l].assign(d, 0.0);
            const double keep_scale = 1.0 / (1.0 - drop->rate);
            for (std::size_t i = 0; i < d; ++i) {
                const double u = rng::uniform01(
                    drop->seed, rng::kDropout, static_cast<std::uint32_t>(drop->salt),
                    static_cast<std::uint32_t>(drop->salt >> 32),
                    static_cast<std::uint32_t>(l * 65536 + i));
                tr.mask[l][i] = u < drop->rate ? 0.0 : keep_scale;
                x[i] *= tr.mask[l][i];
            }
        }
    }
    tr.out = std::move(x);
}

// Returns d(input); accumulates parameter grads into `grad` when non-null.
std::vector<double> stack_backward(const DenseStack& st, const StackTrace& tr,
                                   std::vector<double> dout, DenseStack* grad) {
    for (std::size_t l = st.linear.size(); l-- > 0;) {
        const std::size_t d = st.linear[l].out;
        if (!tr.mask[l].empty())
            for (std::size_t i = 0; i < d; ++i) dout[i] *= tr.mask[l][i];
        for (std::size_t i = 0; i < d; ++i)
            if (tr.lnout[l][i] <= 0.0) dout[i] = 0.0;
        std::vector<double> dpre(d, 0.0);
        ln_backward(st.norm[l], tr.preact[l].data(), tr.ln[l], dout.data(), dpre.data(),
                    grad ? &grad->norm[l] : nullptr, d);
        std::vector<double> dx(st.linear[l].in, 0.0);
        linear_backward(st.linear[l], tr.input[l].data(), dpre.data(), dx.data(),
                        grad ? &grad->linear[l] : nullptr);
        dout = std::move(dx);
    }
    return dout;
}

// ---------------------------------------------------------------------------
// Graph branch (EdgeConv, mean aggregation, mean pooling)
// ---------------------------------------------------------------------------

struct GraphTrace {
    std::vector<std::vector<double>> node_in;       // per layer: n x d_in
    std::vector<std::vector<double>> agg;           // per layer: n x hidden
    std::vector<std::vector<LnCache>> ln;           // per layer: n caches
    std::vector<std::vector<double>> lnout;         // per layer: n x hidden
    std::vector<double> h_g;
};

void graph_forward(const SurrogateNet& net, const PreparedGraph& g, GraphTrace& tr) {
    const index_t n = g.num_nodes;
    const std::size_t L = net.gnn_msg.size();
    tr.node_in.resize(L);
    tr.agg.resize(L);
    tr.ln.resize(L);
    tr.lnout.resize(L);

    std::vector<double> x = g.node_feat;  // layer input, n x d
    std::size_t d = 1;
    std::vector<double> z, m;
    for (std::size_t l = 0; l < L; ++l) {
        const LinearLayer& msg = net.gnn_msg[l];
        const std::size_t h = msg.out;
        tr.node_in[l] = x;
        tr.agg[l].assign(n * h, 0.0);
        z.assign(2 * d + 1, 0.0);
        m.assign(h, 0.0);
        for (std::size_t e = 0; e < g.src.size(); ++e) {
            const index_t si = g.src[e], di = g.dst[e];
            for (std::size_t c = 0; c < d; ++c) {
                z[c] = x[si * d + c];
                z[d + c] = x[di * d + c] - x[si * d + c];
            }
            z[2 * d] = g.weight[e];
            linear_forward(msg, z.data(), m.data());
            double* a = tr.agg[l].data() + si * h;
            for (std::size_t c = 0; c < h; ++c) a[c] += m[c];
        }
        for (index_t i = 0; i < n; ++i) {
            double* a = tr.agg[l].data() + i * h;
            if (g.out_degree[i] == 0) {
                // Isolated node: message from (x_i, 0, 0).
                for (std::size_t c = 0; c < d; ++c) {
                    z[c] = x[i * d + c];
                    z[d + c] = 0.0;
                }
                z[2 * d] = 0.0;
                linear_forward(msg, z.data(), a);
            } else {
                const double inv = 1.0 / static_cast<double>(g.out_degree[i]);
                for (std::size_t c = 0; c < h; ++c) a[c] *= inv;
            }
        }
        tr.ln[l].resize(n);
        tr.lnout[l].assign(n * h, 0.0);
        std::vector<double> next(n * h);
        for (index_t i = 0; i < n; ++i) {
            tr.ln[l][i] = ln_forward(net.gnn_norm[l], tr.agg[l].data() + i * h,
                                     tr.lnout[l].data() + i * h, h);
            for (std::size_t c = 0; c < h; ++c) {
                const double v = tr.lnout[l][i * h + c];
                next[i * h + c] = v > 0.0 ? v : 0.0;
            }
        }
        x = std::move(next);
        d = h;
    }
    tr.h_g.assign(d, 0.0);
    for (index_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) tr.h_g[c] += x[i * d + c];
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& v : tr.h_g) v *= inv_n;
}

void graph_backward(const SurrogateNet& net, const PreparedGraph& g, const GraphTrace& tr,
                    const std::vector<double>& dh_g, SurrogateNet* grad) {
    const index_t n = g.num_nodes;
    const std::size_t L = net.gnn_msg.size();
    const std::size_t h_last = net.gnn_msg.back().out;

    std::vector<double> dx(n * h_last, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (index_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < h_last; ++c) dx[i * h_last + c] = dh_g[c] * inv_n;

    std::vector<double> z, dz, dm;
    for (std::size_t l = L; l-- > 0;) {
        const LinearLayer& msg = net.gnn_msg[l];
        const std::size_t h = msg.out;
        const std::size_t d = (msg.in - 1) / 2;
        const std::vector<double>& x = tr.node_in[l];

        // ReLU then LayerNorm, per node.
        std::vector<double> dagg(n * h, 0.0);
        std::vector<double> dy(h);
        for (index_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < h; ++c)
                dy[c] = tr.lnout[l][i * h + c] > 0.0 ? dx[i * h + c] : 0.0;
            ln_backward(net.gnn_norm[l], tr.agg[l].data() + i * h, tr.ln[l][i], dy.data(),
                        dagg.data() + i * h, grad ? &grad->gnn_norm[l] : nullptr, h);
        }

        std::vector<double> dx_prev(n * d, 0.0);
        z.assign(2 * d + 1, 0.0);
        dz.assign(2 * d + 1, 0.0);
        dm.assign(h, 0.0);
        for (std::size_t e = 0; e < g.src.size(); ++e) {
            const index_t si = g.src[e], di = g.dst[e];
            const double inv_deg = 1.0 / static_cast<double>(g.out_degree[si]);
            for (std::size_t c = 0; c < h; ++c) dm[c] = dagg[si * h + c] * inv_deg;
            for (std::size_t c = 0; c < d; ++c) {
                z[c] = x[si * d + c];
                z[d + c] = x[di * d + c] - x[si * d + c];
            }
            z[2 * d] = g.weight[e];
            std::fill(dz.begin(), dz.end(), 0.0);
            linear_backward(msg, z.data(), dm.data(), dz.data(),
                            grad ? &grad->gnn_msg[l] : nullptr);
            for (std::size_t c = 0; c < d; ++c) {
                dx_prev[si * d + c] += dz[c] - dz[d + c];
                dx_prev[di * d + c] += dz[d + c];
            }
        }
        for (index_t i = 0; i < n; ++i) {
            if (g.out_degree[i] != 0) continue;
            for (std::size_t c = 0; c < d; ++c) {
                z[c] = x[i * d + c];
                z[d + c] = 0.0;
            }
            z[2 * d] = 0.0;
            std::fill(dz.begin(), dz.end(), 0.0);
            linear_backward(msg, z.data(), dagg.data() + i * h, dz.data(),
                            grad ? &grad->gnn_msg[l] : nullptr);
            for (std::size_t c = 0; c < d; ++c) dx_prev[i * d + c] += dz[c];
        }
        dx = std::move(dx_prev);
    }
}

// ---------------------------------------------------------------------------
// Full forward trace
// ---------------------------------------------------------------------------

struct FullTrace {
    StackTrace xa, xm, comb;
    std::vector<double> concat;
    double zmu = 0.0, zsigma = 0.0;
    Prediction pred;
};

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x))
            throw std::invalid_argument(std::string("surrogate: non-finite input in ") + what);
}

// Dense part of the forward pass, given the graph embedding.
void forward_tail(const SurrogateNet& net, const std::vector<double>& h_g,
                  const std::vector<double>& xa_std, const std::vector<double>& xm_std,
                  bool training, std::uint64_t dropout_salt, FullTrace& tr) {
    if (xa_std.size() != net.xa_stack.linear.front().in)
        throw std::invalid_argument("surrogate: x_A dimension mismatch");
    if (xm_std.size() != net.xm_stack.linear.front().in)
        throw std::invalid_argument("surrogate: x_M dimension mismatch");
    check_finite(xa_std, "x_A");
    check_finite(xm_std, "x_M");

    stack_forward(net.xa_stack, xa_std, tr.xa, nullptr);
    stack_forward(net.xm_stack, xm_std, tr.xm, nullptr);

    tr.concat.clear();
    tr.concat.insert(tr.concat.end(), h_g.begin(), h_g.end());
    tr.concat.insert(tr.concat.end(), tr.xa.out.begin(), tr.xa.out.end());
    tr.concat.insert(tr.concat.end(), tr.xm.out.begin(), tr.xm.out.end());

    DropoutKey drop{net.config.seed, dropout_salt, net.config.dropout};
    stack_forward(net.comb_stack, tr.concat, tr.comb, training ? &drop : nullptr);

    tr.zmu = net.head_mu.b[0];
    tr.zsigma = net.head_sigma.b[0];
    for (std::size_t i = 0; i < tr.comb.out.size(); ++i) {
        tr.zmu += net.head_mu.W[i] * tr.comb.out[i];
        tr.zsigma += net.head_sigma.W[i] * tr.comb.out[i];
    }
    tr.pred.mu_hat = tr.zmu > 0.0 ? tr.zmu : 0.0;
    tr.pred.sigma_hat = std::max(softplus(tr.zsigma), kSigmaFloor);
}

// Backward of the dense part from (dmu, dsigma). Returns d h_g; accumulates
// parameter grads into `grad` and the x_M input gradient into `dxm`.
std::vector<double> backward_tail(const SurrogateNet& net, const FullTrace& tr, double dmu,
                                  double dsigma, SurrogateNet* grad, std::vector<double>* dxm) {
    const std::size_t hc = tr.comb.out.size();
    const double dzmu = tr.zmu > 0.0 ? dmu : 0.0;
    const double dzsigma = softplus(tr.zsigma) > kSigmaFloor ? dsigma * sigmoid(tr.zsigma) : 0.0;

    std::vector<double> dh(hc, 0.0);
    for (std::size_t i = 0; i < hc; ++i)
        dh[i] = net.head_mu.W[i] * dzmu + net.head_sigma.W[i] * dzsigma;
    if (grad) {
        for (std::size_t i = 0; i < hc; ++i) {
            grad->head_mu.W[i] += dzmu * tr.comb.out[i];
            grad->head_sigma.W[i] += dzsigma * tr.comb.out[i];
        }
        grad->head_mu.b[0] += dzmu;
        grad->head_sigma.b[0] += dzsigma;
    }

    std::vector<double> dconcat = stack_backward(net.comb_stack, tr.comb, std::move(dh),
                                                 grad ? &grad->comb_stack : nullptr);

    const std::size_t gh = net.gnn_msg.back().out;
    const std::size_t ah = net.xa_stack.linear.back().out;
    const std::size_t mh = net.xm_stack.linear.back().out;
    std::vector<double> dh_g(dconcat.begin(), dconcat.begin() + gh);
    std::vector<double> dh_a(dconcat.begin() + gh, dconcat.begin() + gh + ah);
    std::vector<double> dh_m(dconcat.begin() + gh + ah, dconcat.begin() + gh + ah + mh);

    stack_backward(net.xa_stack, tr.xa, std::move(dh_a), grad ? &grad->xa_stack : nullptr);
    std::vector<double> dxm_local =
        stack_backward(net.xm_stack, tr.xm, std::move(dh_m), grad ? &grad->xm_stack : nullptr);
    if (dxm) *dxm = std::move(dxm_local);
    return dh_g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

SurrogateNet SurrogateNet::init(const SurrogateConfig& cfg) {
    if (cfg.graph_hidden < 1 || cfg.graph_hidden > 512 || cfg.graph_layers < 1 ||
        cfg.xa_layers < 1 || cfg.xm_layers < 1 || cfg.combined_layers < 1)
        throw std::invalid_argument("SurrogateNet::init: bad layer configuration");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
        throw std::invalid_argument("SurrogateNet::init: dropout must lie in [0,1)");
    if (!(cfg.learn_rate > 0.0))
        throw std::invalid_argument("SurrogateNet::init: learn_rate must be positive");

    SurrogateNet net;
    net.config = cfg;
    std::uint32_t tensor_id = 0;
    auto make_linear = [&](index_t in, index_t out, double gain) {
        LinearLayer l;
        l.in = in;
        l.out = out;
        l.W.resize(in * out);
        l.b.assign(out, 0.0);
        const double scale = std::sqrt(gain / static_cast<double>(in));
        for (std::size_t i = 0; i < l.W.size(); ++i)
            l.W[i] = scale * rng::normal(cfg.seed, rng::kNetInit, tensor_id,
                                         static_cast<std::uint32_t>(i >> 16),
                                         static_cast<std::uint32_t>(i & 0xFFFF));
        ++tensor_id;
        return l;
    };
    auto make_norm = [](index_t d) {
        LayerNorm n;
        n.gamma.assign(d, 1.0);
        n.beta.assign(d, 0.0);
        return n;
    };
    auto make_stack = [&](index_t in, index_t hidden, index_t layers) {
        DenseStack st;
        index_t d = in;
        for (index_t l = 0; l < layers; ++l) {
            st.linear.push_back(make_linear(d, hidden, 2.0));
            st.norm.push_back(make_norm(hidden));
            d = hidden;
        }
        return st;
    };

    index_t d = 1;
    for (index_t l = 0; l < cfg.graph_layers; ++l) {
        net.gnn_msg.push_back(make_linear(2 * d + 1, cfg.graph_hidden, 2.0));
        net.gnn_norm.push_back(make_norm(cfg.graph_hidden));
        d = cfg.graph_hidden;
    }
    net.xa_stack = make_stack(kMatrixFeatureDim, cfg.xa_hidden, cfg.xa_layers);
    net.xm_stack = make_stack(kParamEncodingDim, cfg.xm_hidden, cfg.xm_layers);
    net.comb_stack = make_stack(cfg.graph_hidden + cfg.xa_hidden + cfg.xm_hidden,
                                cfg.combined_hidden, cfg.combined_layers);
    net.head_mu = make_linear(cfg.combined_hidden, 1, 1.0);
    net.head_mu.b[0] = 1.0;  // y ~ 1 prior
    net.head_sigma = make_linear(cfg.combined_hidden, 1, 1.0);

    auto identity_st = [](std::size_t dim) {
        Standardizer st;
        st.means.assign(dim, 0.0);
        st.stds.assign(dim, 1.0);
        return st;
    };
    net.st_xa = identity_st(kMatrixFeatureDim);
    net.st_xm = identity_st(kParamEncodingDim);
    net.st_node = identity_st(1);
    return net;
}

PreparedGraph prepare_graph(const MatrixGraph& g, const Standardizer& node_st) {
    PreparedGraph p;
    p.num_nodes = g.num_nodes;
    p.src.reserve(g.edges.size());
    p.dst.reserve(g.edges.size());
    p.weight.reserve(g.edges.size());
    p.out_degree.assign(g.num_nodes, 0);

    double frob_sq = 0.0;
    for (const GraphEdge& e : g.edges) frob_sq += e.weight * e.weight;
    const double scale =
        frob_sq > 0.0 ? std::sqrt(static_cast<double>(g.edges.size()) / frob_sq) : 1.0;

    // Edges grouped by source (build_graph emits row-major order already).
    std::vector<std::size_t> order(g.edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&g](std::size_t a, std::size_t b) {
        return g.edges[a].src < g.edges[b].src;
    });
    for (std::size_t i : order) {
        const GraphEdge& e = g.edges[i];
        if (e.src >= g.num_nodes || e.dst >= g.num_nodes)
            throw std::invalid_argument("prepare_graph: edge endpoint out of range");
        p.src.push_back(e.src);
        p.dst.push_back(e.dst);
        p.weight.push_back(e.weight * scale);
        p.out_degree[e.src]++;
    }
    p.node_feat.resize(g.num_nodes);
    for (index_t i = 0; i < g.num_nodes; ++i)
        p.node_feat[i] = (g.node_feature[i] - node_st.means[0]) / node_st.stds[0];
    return p;
}

Prediction forward(const SurrogateNet& net, const PreparedGraph& g,
                   const std::vector<double>& xa_std, const std::vector<double>& xm_std,
                   bool training, std::uint64_t dropout_salt) {
    GraphTrace gt;
    graph_forward(net, g, gt);
    FullTrace tr;
    forward_tail(net, gt.h_g, xa_std, xm_std, training, dropout_salt, tr);
    return tr.pred;
}

Prediction predict(const SurrogateNet& net, const MatrixGraph& g,
                   const std::vector<double>& xa_raw, const McmcParams& xm) {
    const PreparedGraph pg = prepare_graph(g, net.st_node);
    return forward(net, pg, apply_standardizer(net.st_xa, xa_raw),
                   apply_standardizer(net.st_xm, encode_params(xm)));
}

GraphContext make_context(const SurrogateNet& net, const PreparedGraph& g,
                          const std::vector<double>& xa_std) {
    GraphTrace gt;
    graph_forward(net, g, gt);
    StackTrace at;
    stack_forward(net.xa_stack, xa_std, at, nullptr);
    return GraphContext{std::move(gt.h_g), std::move(at.out)};
}

Prediction predict_with_context(const SurrogateNet& net, const GraphContext& ctx,
                                const std::vector<double>& xm_std) {
    StackTrace xmt;
    stack_forward(net.xm_stack, xm_std, xmt, nullptr);
    std::vector<double> concat;
    concat.insert(concat.end(), ctx.h_g.begin(), ctx.h_g.end());
    concat.insert(concat.end(), ctx.h_a.begin(), ctx.h_a.end());
    concat.insert(concat.end(), xmt.out.begin(), xmt.out.end());
    StackTrace ct;
    stack_forward(net.comb_stack, concat, ct, nullptr);
    double zmu = net.head_mu.b[0], zsigma = net.head_sigma.b[0];
    for (std::size_t i = 0; i < ct.out.size(); ++i) {
        zmu += net.head_mu.W[i] * ct.out[i];
        zsigma += net.head_sigma.W[i] * ct.out[i];
    }
    return Prediction{zmu > 0.0 ? zmu : 0.0, std::max(softplus(zsigma), kSigmaFloor)};
}

XmSensitivity xm_gradient(const SurrogateNet& net, const GraphContext& ctx,
                          const std::vector<double>& xm_std) {
    StackTrace xmt;
    stack_forward(net.xm_stack, xm_std, xmt, nullptr);
    std::vector<double> concat;
    concat.insert(concat.end(), ctx.h_g.begin(), ctx.h_g.end());
    concat.insert(concat.end(), ctx.h_a.begin(), ctx.h_a.end());
    concat.insert(concat.end(), xmt.out.begin(), xmt.out.end());
    StackTrace ct;
    stack_forward(net.comb_stack, concat, ct, nullptr);
    double zmu = net.head_mu.b[0], zsigma = net.head_sigma.b[0];
    for (std::size_t i = 0; i < ct.out.size(); ++i) {
        zmu += net.head_mu.W[i] * ct.out[i];
        zsigma += net.head_sigma.W[i] * ct.out[i];
    }

    XmSensitivity out;
    out.mu = zmu > 0.0 ? zmu : 0.0;
    out.sigma = std::max(softplus(zsigma), kSigmaFloor);

    const std::size_t gh = ctx.h_g.size();
    const std::size_t ah = ctx.h_a.size();
    const std::size_t mh = xmt.out.size();
    for (int head = 0; head < 2; ++head) {
        const double dz = head == 0 ? (zmu > 0.0 ? 1.0 : 0.0)
                                    : (softplus(zsigma) > kSigmaFloor ? sigmoid(zsigma) : 0.0);
        std::vector<double> dh(ct.out.size());
        const LinearLayer& hw = head == 0 ? net.head_mu : net.head_sigma;
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] = hw.W[i] * dz;
        std::vector<double> dconcat = stack_backward(net.comb_stack, ct, std::move(dh), nullptr);
        std::vector<double> dh_m(dconcat.begin() + gh + ah, dconcat.begin() + gh + ah + mh);
        std::vector<double> dxm = stack_backward(net.xm_stack, xmt, std::move(dh_m), nullptr);
        (head == 0 ? out.dmu : out.dsigma) = std::move(dxm);
    }
    return out;
}

namespace {

struct PreparedSample {
    const PreparedGraph* graph = nullptr;
    std::string matrix_id;
    std::vector<double> xa_std;
    std::vector<double> xm_std;
    double y_mean = 0.0;
    double y_std = 0.0;
};

double sample_loss_and_backward(const SurrogateNet& net, const PreparedGraph& g,
                                const PreparedSample& s, bool training,
                                std::uint64_t dropout_salt, double weight, SurrogateNet* grad,
                                std::vector<double>* dh_g_accum) {
    GraphTrace gt;
    graph_forward(net, g, gt);
    FullTrace tr;
    forward_tail(net, gt.h_g, s.xa_std, s.xm_std, training, dropout_salt, tr);
    const double emu = tr.pred.mu_hat - s.y_mean;
    const double esig = tr.pred.sigma_hat - s.y_std;
    const double L = emu * emu + esig * esig;
    if (grad || dh_g_accum) {
        std::vector<double> dh_g =
            backward_tail(net, tr, 2.0 * emu * weight, 2.0 * esig * weight, grad, nullptr);
        if (dh_g_accum)
            for (std::size_t i = 0; i < dh_g.size(); ++i) (*dh_g_accum)[i] += dh_g[i];
        else
            graph_backward(net, g, gt, dh_g, grad);
    }
    return L;
}

}  // namespace

double loss(const SurrogateNet& net, const std::vector<TrainSample>& batch, bool training,
            std::uint64_t dropout_salt) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    std::map<std::string, PreparedGraph> graphs;
    double total = 0.0;
    for (const TrainSample& s : batch) {
        auto it = graphs.find(s.matrix_id);
        if (it == graphs.end())
            it = graphs.emplace(s.matrix_id, prepare_graph(*s.graph, net.st_node)).first;
        PreparedSample ps{&it->second, s.matrix_id, apply_standardizer(net.st_xa, s.xa),
                          apply_standardizer(net.st_xm, s.xm_enc), s.y_mean, s.y_std};
        total += sample_loss_and_backward(net, it->second, ps, training, dropout_salt, 0.0,
                                          nullptr, nullptr);
    }
    return total / static_cast<double>(batch.size());
}

namespace {

// Batched epoch pass over prepared samples: one graph forward/backward per
// distinct matrix per batch, with d h_g accumulated across the batch samples
// of that matrix (exact, since the graph branch is sample-independent).
double run_batch(SurrogateNet& net,
                 const std::map<std::string, PreparedGraph>& graphs,
                 const std::vector<PreparedSample>& samples,
                 const std::vector<std::size_t>& batch_idx, bool training, std::uint64_t epoch,
                 SurrogateNet* grad) {
    std::map<std::string, std::vector<std::size_t>> by_matrix;
    for (std::size_t idx : batch_idx) by_matrix[samples[idx].matrix_id].push_back(idx);

    const double weight = 1.0 / static_cast<double>(batch_idx.size());
    double total = 0.0;
    for (const auto& [mid, idxs] : by_matrix) {
        const PreparedGraph& g = graphs.at(mid);
        GraphTrace gt;
        graph_forward(net, g, gt);
        std::vector<double> dh_g_accum(gt.h_g.size(), 0.0);
        for (std::size_t idx : idxs) {
            const PreparedSample& s = samples[idx];
            FullTrace tr;
            const std::uint64_t salt = (epoch << 32) | static_cast<std::uint64_t>(idx);
            forward_tail(net, gt.h_g, s.xa_std, s.xm_std, training, salt, tr);
            const double emu = tr.pred.mu_hat - s.y_mean;
            const double esig = tr.pred.sigma_hat - s.y_std;
            total += emu * emu + esig * esig;
            if (grad) {
                std::vector<double> dh_g = backward_tail(net, tr, 2.0 * emu * weight,
                                                         2.0 * esig * weight, grad, nullptr);
                for (std::size_t i = 0; i < dh_g.size(); ++i) dh_g_accum[i] += dh_g[i];
            }
        }
        if (grad) graph_backward(net, g, gt, dh_g_accum, grad);
    }
    return total / static_cast<double>(batch_idx.size());
}

}  // namespace

TrainHistory train(SurrogateNet& net, const std::vector<TrainSample>& data) {
    const SurrogateConfig& cfg = net.config;
    if (data.size() < 10)
        throw std::invalid_argument("train: need at least 10 samples (got " +
                                    std::to_string(data.size()) + ")");

    // Deterministic 80/20 split.
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i-- > 1;) {
        const std::size_t j = rng::bits64(cfg.seed, rng::kShuffle, 0, static_cast<std::uint32_t>(i),
                                          0) %
                              (i + 1);
        std::swap(order[i], order[j]);
    }
    const std::size_t n_train =
        std::min(data.size() - 1, static_cast<std::size_t>(0.8 * static_cast<double>(data.size())));
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> val_idx(order.begin() + n_train, order.end());
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("train: empty training or validation split");

    // Fit standardizers on the training split only.
    std::vector<std::vector<double>> xa_rows, xm_rows;
    std::map<std::string, const MatrixGraph*> train_graphs;
    for (std::size_t i : train_idx) {
        xa_rows.push_back(data[i].xa);
        xm_rows.push_back(data[i].xm_enc);
        train_graphs.emplace(data[i].matrix_id, data[i].graph);
    }
    net.st_xa = fit_standardizer(xa_rows);
    net.st_xm = fit_standardizer(xm_rows);
    {
        std::vector<std::vector<double>> degree_rows;
        for (const auto& [id, g] : train_graphs)
            for (double deg : g->node_feature) degree_rows.push_back({deg});
        net.st_node = degree_rows.size() >= 2 ? fit_standardizer(degree_rows)
                                              : Standardizer{{0.0}, {1.0}};
    }

    std::map<std::string, PreparedGraph> graphs;
    for (const TrainSample& s : data)
        if (!graphs.count(s.matrix_id)) graphs.emplace(s.matrix_id, prepare_graph(*s.graph, net.st_node));

    std::vector<PreparedSample> samples;
    samples.reserve(data.size());
    for (const TrainSample& s : data)
        samples.push_back({&graphs.at(s.matrix_id), s.matrix_id,
                           apply_standardizer(net.st_xa, s.xa),
                           apply_standardizer(net.st_xm, s.xm_enc), s.y_mean, s.y_std});

    // Adam with decoupled weight decay.
    SurrogateNet grad = zero_like(net);
    SurrogateNet m1 = zero_like(net);
    SurrogateNet m2 = zero_like(net);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t adam_t = 0;

    TrainHistory hist;
    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    index_t best_epoch = 0;
    index_t since_best = 0;

    const index_t batch_size = std::max<index_t>(1, cfg.batch_size);
    std::vector<std::size_t> epoch_order = train_idx;

    for (index_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = epoch_order.size(); i-- > 1;) {
            const std::size_t j =
                rng::bits64(cfg.seed, rng::kShuffle, static_cast<std::uint32_t>(epoch + 1),
                            static_cast<std::uint32_t>(i), 0) %
                (i + 1);
            std::swap(epoch_order[i], epoch_order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < epoch_order.size(); start += batch_size) {
            const std::size_t stop = std::min(epoch_order.size(), start + batch_size);
            std::vector<std::size_t> batch(epoch_order.begin() + start, epoch_order.begin() + stop);

            for_each_tensor(grad, [](const std::string&, std::vector<double>& t) {
                std::fill(t.begin(), t.end(), 0.0);
            });
            const double bl = run_batch(net, graphs, samples, batch, true, epoch, &grad);
            if (!std::isfinite(bl))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " (first sample index " +
                                         std::to_string(batch.front()) + ")");
            epoch_loss += bl;
            ++batches;

            ++adam_t;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
            auto g_it = [&](auto& net_t, auto& g_t, auto& m_t, auto& v_t) {
                for (std::size_t i = 0; i < net_t.size(); ++i) {
                    m_t[i] = beta1 * m_t[i] + (1.0 - beta1) * g_t[i];
                    v_t[i] = beta2 * v_t[i] + (1.0 - beta2) * g_t[i] * g_t[i];
                    const double mhat = m_t[i] / bc1;
                    const double vhat = v_t[i] / bc2;
                    net_t[i] -= cfg.learn_rate *
                                (mhat / (std::sqrt(vhat) + adam_eps) + cfg.weight_decay * net_t[i]);
                }
            };
            // Walk the four nets in lockstep (identical tensor order).
            std::vector<std::vector<double>*> nt, gt2, mt, vt;
            for_each_tensor(net, [&nt](const std::string&, std::vector<double>& t) { nt.push_back(&t); });
            for_each_tensor(grad, [&gt2](const std::string&, std::vector<double>& t) { gt2.push_back(&t); });
            for_each_tensor(m1, [&mt](const std::string&, std::vector<double>& t) { mt.push_back(&t); });
            for_each_tensor(m2, [&vt](const std::string&, std::vector<double>& t) { vt.push_back(&t); });
            for (std::size_t k = 0; k < nt.size(); ++k) g_it(*nt[k], *gt2[k], *mt[k], *vt[k]);
        }
        hist.train_loss.push_back(epoch_loss / static_cast<double>(batches));

        const double vl = run_batch(net, graphs, samples, val_idx, false, epoch, nullptr);
        hist.val_loss.push_back(vl);
        if (vl < best_val) {
            best_val = vl;
            best_epoch = epoch;
            since_best = 0;
            best_params.clear();
            for_each_tensor(net, [&best_params](const std::string&, const std::vector<double>& t) {
                best_params.insert(best_params.end(), t.begin(), t.end());
            });
        } else if (++since_best > cfg.patience) {
            break;
        }
    }

    if (!best_params.empty()) {
        std::size_t off = 0;
        for_each_tensor(net, [&best_params, &off](const std::string&, std::vector<double>& t) {
            std::copy(best_params.begin() + off, best_params.begin() + off + t.size(), t.begin());
            off += t.size();
        });
    }
    hist.best_epoch = best_epoch;
    hist.best_val_loss = best_val;
    return hist;
}

double grad_check(const SurrogateNet& net, const TrainSample& sample, int probe_count) {
    SurrogateNet work = net;
    const PreparedGraph g = prepare_graph(*sample.graph, work.st_node);
    PreparedSample ps{&g, sample.matrix_id, apply_standardizer(work.st_xa, sample.xa),
                      apply_standardizer(work.st_xm, sample.xm_enc), sample.y_mean,
                      sample.y_std};

    SurrogateNet grad = zero_like(work);
    sample_loss_and_backward(work, g, ps, false, 0, 1.0, &grad, nullptr);

    // Also the x_M input gradient (consumed by the acquisition module).
    std::vector<double> dxm_analytic;
    {
        GraphTrace gt;
        graph_forward(work, g, gt);
        FullTrace tr;
        forward_tail(work, gt.h_g, ps.xa_std, ps.xm_std, false, 0, tr);
        const double emu = tr.pred.mu_hat - ps.y_mean;
        const double esig = tr.pred.sigma_hat - ps.y_std;
        backward_tail(work, tr, 2.0 * emu, 2.0 * esig, nullptr, &dxm_analytic);
    }

    auto loss_at = [&](const PreparedSample& s) {
        GraphTrace gt;
        graph_forward(work, g, gt);
        FullTrace tr;
        forward_tail(work, gt.h_g, s.xa_std, s.xm_std, false, 0, tr);
        const double emu = tr.pred.mu_hat - s.y_mean;
        const double esig = tr.pred.sigma_hat - s.y_std;
        return emu * emu + esig * esig;
    };

    std::vector<std::vector<double>*> tensors, gtensors;
    for_each_tensor(work, [&tensors](const std::string&, std::vector<double>& t) { tensors.push_back(&t); });
    for_each_tensor(grad, [&gtensors](const std::string&, std::vector<double>& t) { gtensors.push_back(&t); });
    const std::size_t total = total_params(work);

    // Components are compared at their own magnitude; components far below
    // the gradient's dominant scale are compared against 1% of that scale so
    // finite-difference roundoff on near-zero entries cannot dominate.
    double g_scale = 0.0;
    for (const auto* t : gtensors)
        for (double g : *t) g_scale = std::max(g_scale, std::abs(g));
    for (double g : dxm_analytic) g_scale = std::max(g_scale, std::abs(g));
    const double floor = std::max(1e-2 * g_scale, 1e-8);

    const double h = 1e-6;
    double max_rel = 0.0;
    auto rel_err = [floor](double a, double f) {
        return std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor});
    };

    for (int p = 0; p < probe_count; ++p) {
        std::size_t flat = rng::bits64(net.config.seed, rng::kTestOracle, 7,
                                       static_cast<std::uint32_t>(p), 0) %
                           total;
        std::size_t t = 0;
        while (flat >= tensors[t]->size()) {
            flat -= tensors[t]->size();
            ++t;
        }
        double& theta = (*tensors[t])[flat];
        const double saved = theta;
        theta = saved + h;
        const double lp = loss_at(ps);
        theta = saved - h;
        const double lm = loss_at(ps);
        theta = saved;
        const double fd = (lp - lm) / (2.0 * h);
        max_rel = std::max(max_rel, rel_err((*gtensors[t])[flat], fd));
    }

    for (std::size_t i = 0; i < ps.xm_std.size(); ++i) {
        PreparedSample s = ps;
        s.xm_std[i] += h;
        const double lp = loss_at(s);
        s.xm_std[i] = ps.xm_std[i] - h;
        const double lm = loss_at(s);
        const double fd = (lp - lm) / (2.0 * h);
        max_rel = std::max(max_rel, rel_err(dxm_analytic[i], fd));
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization (shortest round-trip doubles; reload is bitwise).
// ---------------------------------------------------------------------------

namespace {

nlohmann::json standardizer_to_json(const Standardizer& st) {
    return {{"means", st.means}, {"stds", st.stds}};
}

Standardizer standardizer_from_json(const nlohmann::json& j) {
    Standardizer st;
    st.means = j.at("means").get<std::vector<double>>();
    st.stds = j.at("stds").get<std::vector<double>>();
    return st;
}

}  // namespace

void save_checkpoint(const SurrogateNet& net, const std::string& path) {
    nlohmann::json j;
    j["format"] = "stoprec-surrogate-v1";
    const SurrogateConfig& c = net.config;
    j["config"] = {{"graph_hidden", c.graph_hidden},
                   {"graph_layers", c.graph_layers},
                   {"xa_layers", c.xa_layers},
                   {"xa_hidden", c.xa_hidden},
                   {"xm_layers", c.xm_layers},
                   {"xm_hidden", c.xm_hidden},
                   {"combined_layers", c.combined_layers},
                   {"combined_hidden", c.combined_hidden},
                   {"dropout", c.dropout},
                   {"learn_rate", c.learn_rate},
                   {"weight_decay", c.weight_decay},
                   {"batch_size", c.batch_size},
                   {"max_epochs", c.max_epochs},
                   {"patience", c.patience},
                   {"seed", c.seed}};
    j["standardizers"] = {{"xa", standardizer_to_json(net.st_xa)},
                          {"xm", standardizer_to_json(net.st_xm)},
                          {"node", standardizer_to_json(net.st_node)}};
    nlohmann::json tensors;
    for_each_tensor(net, [&tensors](const std::string& name, const std::vector<double>& t) {
        tensors[name] = t;
    });
    j["tensors"] = std::move(tensors);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << j.dump();
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

SurrogateNet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "stoprec-surrogate-v1")
        throw std::runtime_error("'" + path + "' is not a surrogate checkpoint");

    SurrogateConfig c;
    const nlohmann::json& jc = j.at("config");
    c.graph_hidden = jc.at("graph_hidden").get<index_t>();
    c.graph_layers = jc.at("graph_layers").get<index_t>();
    c.xa_layers = jc.at("xa_layers").get<index_t>();
    c.xa_hidden = jc.at("xa_hidden").get<index_t>();
    c.xm_layers = jc.at("xm_layers").get<index_t>();
    c.xm_hidden = jc.at("xm_hidden").get<index_t>();
    c.combined_layers = jc.at("combined_layers").get<index_t>();
    c.combined_hidden = jc.at("combined_hidden").get<index_t>();
    c.dropout = jc.at("dropout").get<double>();
    c.learn_rate = jc.at("learn_rate").get<double>();
    c.weight_decay = jc.at("weight_decay").get<double>();
    c.batch_size = jc.at("batch_size").get<index_t>();
    c.max_epochs = jc.at("max_epochs").get<index_t>();
    c.patience = jc.at("patience").get<index_t>();
    c.seed = jc.at("seed").get<std::uint64_t>();

    SurrogateNet net = SurrogateNet::init(c);
    net.st_xa = standardizer_from_json(j.at("standardizers").at("xa"));
    net.st_xm = standardizer_from_json(j.at("standardizers").at("xm"));
    net.st_node = standardizer_from_json(j.at("standardizers").at("node"));
    const nlohmann::json& tensors = j.at("tensors");
    for_each_tensor(net, [&tensors](const std::string& name, std::vector<double>& t) {
        const auto loaded = tensors.at(name).get<std::vector<double>>();
        if (loaded.size() != t.size())
            throw std::runtime_error("checkpoint tensor '" + name + "' has wrong size");
        t = loaded;
    });
    return net;
}

}  // namespace stoprec
