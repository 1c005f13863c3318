#include "stoprec/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "stoprec/rng.hpp"
#include "stoprec/stats.hpp"

namespace stoprec {

double expected_improvement(double mu, double sigma, double y_min, double xi) {
    if (sigma < 0.0) throw std::invalid_argument("expected_improvement: sigma must be >= 0");
    const double gap = y_min - mu - xi;
    if (sigma == 0.0) return gap > 0.0 ? gap : 0.0;
    const double z = gap / sigma;
    const double ei = gap * stats::normal_cdf(z) + sigma * stats::normal_pdf(z);
    return ei > 0.0 ? ei : 0.0;
}

SurrogatePosterior::SurrogatePosterior(const SurrogateNet& net, GraphContext ctx,
                                       SolverKind solver)
    : net_(net), ctx_(std::move(ctx)) {
    McmcParams tag;
    tag.solver = solver;
    const std::vector<double> enc = encode_params(tag);
    onehot_std_ = apply_standardizer(net.st_xm, enc);
    for (int i = 0; i < 3; ++i) {
        mean_[i] = net.st_xm.means[i];
        std_[i] = net.st_xm.stds[i];
        inv_std_[i] = 1.0 / std_[i];
    }
}

void SurrogatePosterior::eval(const std::array<double, 3>& x, double& mu, double& sigma,
                              std::array<double, 3>& dmu, std::array<double, 3>& dsigma) const {
    std::vector<double> xm_std = onehot_std_;
    for (int i = 0; i < 3; ++i) xm_std[i] = (x[i] - mean_[i]) * inv_std_[i];
    const XmSensitivity s = xm_gradient(net_, ctx_, xm_std);
    mu = s.mu;
    sigma = s.sigma;
    for (int i = 0; i < 3; ++i) {
        dmu[i] = s.dmu[i] * inv_std_[i];
        dsigma[i] = s.dsigma[i] * inv_std_[i];
    }
}

namespace {

using Point = std::array<double, 3>;

double dist(const Point& a, const Point& b) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

Point clamp_box(Point x, const AcquisitionConfig& cfg) {
    for (int i = 0; i < 3; ++i)
        x[i] = std::min(cfg.bounds[i][1], std::max(cfg.bounds[i][0], x[i]));
    return x;
}

// Negative EI and its gradient at x.
double neg_ei(const Posterior& post, double y_min, double xi, const Point& x, Point& grad) {
    double mu, sigma;
    Point dmu, dsigma;
    post.eval(x, mu, sigma, dmu, dsigma);
    const double gap = y_min - mu - xi;
    double ei, dei_dmu, dei_dsigma;
    if (sigma <= 0.0) {
        ei = gap > 0.0 ? gap : 0.0;
        dei_dmu = gap > 0.0 ? -1.0 : 0.0;
        dei_dsigma = 0.0;
    } else {
        const double z = gap / sigma;
        const double Phi = stats::normal_cdf(z);
        const double phi = stats::normal_pdf(z);
        ei = gap * Phi + sigma * phi;
        dei_dmu = -Phi;
        dei_dsigma = phi;
    }
    for (int i = 0; i < 3; ++i) grad[i] = -(dei_dmu * dmu[i] + dei_dsigma * dsigma[i]);
    return -ei;
}

struct OptResult {
    Point x;
    double ei = -std::numeric_limits<double>::infinity();
};

// Projection-plus-limited-memory quasi-Newton descent on -EI inside the box.
OptResult optimize_from(const Posterior& post, double y_min, const AcquisitionConfig& cfg,
                        Point x0) {
    constexpr int kMemory = 8;
    Point x = clamp_box(x0, cfg);
    Point g;
    double f = neg_ei(post, y_min, cfg.xi, x, g);
    if (!std::isfinite(f)) return {x, -std::numeric_limits<double>::infinity()};

    std::deque<std::pair<Point, Point>> mem;  // (s, y) pairs
    for (int it = 0; it < cfg.max_opt_iters; ++it) {
        Point pg;
        for (int i = 0; i < 3; ++i)
            pg[i] = x[i] - std::min(cfg.bounds[i][1], std::max(cfg.bounds[i][0], x[i] - g[i]));
        if (std::sqrt(pg[0] * pg[0] + pg[1] * pg[1] + pg[2] * pg[2]) <= 1e-8) break;

        // Two-loop recursion for the search direction.
        Point q = g;
        std::vector<double> alpha(mem.size());
        for (std::size_t k = mem.size(); k-- > 0;) {
            const auto& [s, yv] = mem[k];
            const double rho = 1.0 / (s[0] * yv[0] + s[1] * yv[1] + s[2] * yv[2]);
            alpha[k] = rho * (s[0] * q[0] + s[1] * q[1] + s[2] * q[2]);
            for (int i = 0; i < 3; ++i) q[i] -= alpha[k] * yv[i];
        }
        if (!mem.empty()) {
            const auto& [s, yv] = mem.back();
            const double sy = s[0] * yv[0] + s[1] * yv[1] + s[2] * yv[2];
            const double yy = yv[0] * yv[0] + yv[1] * yv[1] + yv[2] * yv[2];
            const double h0 = sy / yy;
            for (int i = 0; i < 3; ++i) q[i] *= h0;
        }
        for (std::size_t k = 0; k < mem.size(); ++k) {
            const auto& [s, yv] = mem[k];
            const double rho = 1.0 / (s[0] * yv[0] + s[1] * yv[1] + s[2] * yv[2]);
            const double beta = rho * (yv[0] * q[0] + yv[1] * q[1] + yv[2] * q[2]);
            for (int i = 0; i < 3; ++i) q[i] += s[i] * (alpha[k] - beta);
        }
        Point d{-q[0], -q[1], -q[2]};
        if (d[0] * g[0] + d[1] * g[1] + d[2] * g[2] >= 0.0) d = {-g[0], -g[1], -g[2]};

        // Backtracking Armijo search along the projected path.
        double step = 1.0;
        Point xn = x, gn;
        double fn = f;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            Point cand;
            for (int i = 0; i < 3; ++i) cand[i] = x[i] + step * d[i];
            cand = clamp_box(cand, cfg);
            Point gc;
            const double fc = neg_ei(post, y_min, cfg.xi, cand, gc);
            double gdx = 0.0;
            for (int i = 0; i < 3; ++i) gdx += g[i] * (cand[i] - x[i]);
            if (std::isfinite(fc) && fc <= f + 1e-4 * gdx && gdx < 0.0) {
                xn = cand;
                fn = fc;
                gn = gc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        Point s, yv;
        double sy = 0.0;
        for (int i = 0; i < 3; ++i) {
            s[i] = xn[i] - x[i];
            yv[i] = gn[i] - g[i];
            sy += s[i] * yv[i];
        }
        if (sy > 1e-12) {
            mem.emplace_back(s, yv);
            if (mem.size() > kMemory) mem.pop_front();
        }
        x = xn;
        f = fn;
        g = gn;
    }
    return {x, -f};
}

Point draw_point(const AcquisitionConfig& cfg, std::uint32_t slot, std::uint32_t attempt) {
    Point x;
    for (std::uint32_t i = 0; i < 3; ++i)
        x[i] = rng::uniform(cfg.seed, rng::kProposal, slot, attempt, i, cfg.bounds[i][0],
                            cfg.bounds[i][1]);
    return x;
}

}  // namespace

std::vector<Point> propose_encoded(const Posterior& posterior, double y_min, int k,
                                   const AcquisitionConfig& cfg) {
    if (k < 1) throw std::invalid_argument("propose_encoded: k must be >= 1");
    for (int i = 0; i < 3; ++i)
        if (!(cfg.bounds[i][0] < cfg.bounds[i][1]))
            throw std::invalid_argument("propose_encoded: bounds must satisfy lo < hi");
    if (!(cfg.xi >= 0.0)) throw std::invalid_argument("propose_encoded: xi must be >= 0");

    constexpr double kDupTol = 1e-6;
    std::vector<Point> accepted;
    accepted.reserve(k);
    auto is_duplicate = [&](const Point& x) {
        for (const Point& a : accepted)
            if (dist(a, x) < kDupTol) return true;
        return false;
    };

    for (int slot = 0; slot < k; ++slot) {
        OptResult best;
        for (int r = 0; r < cfg.restarts; ++r) {
            const OptResult cand = optimize_from(
                posterior, y_min, cfg,
                draw_point(cfg, static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(r)));
            if (cand.ei > best.ei) best = cand;
        }
        Point pick = best.x;

        // Near-duplicates are replaced: a few single-start re-optimizations
        // from fresh draws, then raw draws (a fresh uniform point is distinct
        // almost surely).
        std::uint32_t attempt = 1000;
        int reopt = 0;
        while (is_duplicate(pick)) {
            const Point x0 = draw_point(cfg, static_cast<std::uint32_t>(slot), attempt++);
            pick = reopt++ < 4 ? optimize_from(posterior, y_min, cfg, x0).x : x0;
            if (attempt > 1064) {  // deterministic last resort: spread along the box diagonal
                for (int i = 0; i < 3; ++i)
                    pick[i] = cfg.bounds[i][0] + (cfg.bounds[i][1] - cfg.bounds[i][0]) *
                                                     (static_cast<double>(slot) + 0.5) /
                                                     static_cast<double>(k);
                break;
            }
        }
        accepted.push_back(pick);
    }
    return accepted;
}

std::vector<McmcParams> propose_batch(const SurrogateNet& net, const MatrixGraph& graph,
                                      const std::vector<double>& xa_raw, double y_min, int k,
                                      const AcquisitionConfig& cfg, SolverKind solver) {
    const PreparedGraph pg = prepare_graph(graph, net.st_node);
    SurrogatePosterior posterior(net, make_context(net, pg, apply_standardizer(net.st_xa, xa_raw)),
                                 solver);
    const std::vector<Point> enc = propose_encoded(posterior, y_min, k, cfg);
    std::vector<McmcParams> out;
    out.reserve(enc.size());
    for (const Point& x : enc) {
        McmcParams p;
        p.alpha = x[0];
        p.epsilon = std::exp(x[1]);
        p.delta = std::exp(x[2]);
        p.solver = solver;
        out.push_back(p);
    }
    return out;
}

}  // namespace stoprec
