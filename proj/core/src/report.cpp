#include "stoprec/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "stoprec/stats.hpp"

namespace stoprec {

std::string format_double(double v) { return nlohmann::json(v).dump(); }

std::pair<double, double> prediction_interval(double mu, double sigma, double tau) {
    if (!(sigma > 0.0)) throw std::invalid_argument("prediction_interval: sigma must be > 0");
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("prediction_interval: tau must lie in (0,1)");
    const double z = stats::normal_quantile(0.5 * (1.0 + tau));
    return {mu - z * sigma, mu + z * sigma};
}

std::pair<double, double> wilson_interval(double p_hat, std::size_t n, double z) {
    if (n < 1) throw std::invalid_argument("wilson_interval: n must be >= 1");
    if (!(p_hat >= 0.0 && p_hat <= 1.0))
        throw std::invalid_argument("wilson_interval: p_hat must lie in [0,1]");
    const double nn = static_cast<double>(n);
    const double z2n = z * z / nn;
    const double center = p_hat + 0.5 * z2n;
    const double half = z * std::sqrt(p_hat * (1.0 - p_hat) / nn + 0.25 * z2n / nn);
    const double denom = 1.0 + z2n;
    double lo = (center - half) / denom;
    double hi = (center + half) / denom;
    lo = std::max(0.0, std::min(1.0, lo));
    hi = std::max(0.0, std::min(1.0, hi));
    return {lo, hi};
}

CoverageRow empirical_coverage(const std::vector<Prediction>& predictions,
                               const std::vector<double>& observations, double tau) {
    if (predictions.size() != observations.size())
        throw std::invalid_argument("empirical_coverage: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("empirical_coverage: empty input");

    std::size_t inside = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto [lo, hi] =
            prediction_interval(predictions[i].mu_hat, predictions[i].sigma_hat, tau);
        if (observations[i] >= lo && observations[i] <= hi) ++inside;
    }
    CoverageRow row;
    row.tau = tau;
    row.expected = tau;
    row.n = predictions.size();
    row.observed = static_cast<double>(inside) / static_cast<double>(predictions.size());
    const double z975 = stats::normal_quantile(0.975);
    std::tie(row.wilson_lo, row.wilson_hi) = wilson_interval(row.observed, row.n, z975);
    return row;
}

std::vector<InclusionRow> pointwise_ci_inclusion(const std::vector<LabeledSample>& samples,
                                                 const std::vector<Prediction>& predictions) {
    if (samples.size() != predictions.size())
        throw std::invalid_argument("pointwise_ci_inclusion: length mismatch");

    std::vector<InclusionRow> rows;
    rows.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const LabeledSample& s = samples[i];
        const int r = static_cast<int>(s.replicate_ys.size());
        if (r < 2)
            throw std::invalid_argument("pointwise_ci_inclusion: sample needs >= 2 replicates");
        const double t = stats::student_t_quantile(0.995, r - 1);
        const double half = t * s.y_std / std::sqrt(static_cast<double>(r));
        InclusionRow row;
        row.xm = s.xm;
        row.y_mean = s.y_mean;
        row.y_std = s.y_std;
        row.ci_lo = s.y_mean - half;
        row.ci_hi = s.y_mean + half;
        row.mu_hat = predictions[i].mu_hat;
        row.sigma_hat = predictions[i].sigma_hat;
        row.included = row.mu_hat >= row.ci_lo && row.mu_hat <= row.ci_hi;
        row.replicates = r;
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const InclusionRow& a, const InclusionRow& b) {
        return std::tie(a.xm.alpha, a.xm.epsilon, a.xm.delta) <
               std::tie(b.xm.alpha, b.xm.epsilon, b.xm.delta);
    });
    return rows;
}

BoxSummary summarize_strategy(const std::string& label,
                              const std::vector<LabeledSample>& samples) {
    std::vector<double> medians;
    const LabeledSample* best = nullptr;
    double best_median = 0.0;
    for (const LabeledSample& s : samples) {
        if (s.invalid || s.replicate_ys.empty()) continue;
        const double med = stats::median(s.replicate_ys);
        medians.push_back(med);
        if (!best || med < best_median) {
            best = &s;
            best_median = med;
        }
    }
    if (medians.empty())
        throw std::invalid_argument("summarize_strategy: no valid samples for '" + label + "'");

    BoxSummary box;
    box.label = label;
    box.count = medians.size();
    box.median = stats::median(medians);
    box.q1 = stats::quantile(medians, 0.25);
    box.q3 = stats::quantile(medians, 0.75);
    box.min = *std::min_element(medians.begin(), medians.end());
    box.max = *std::max_element(medians.begin(), medians.end());
    box.best_xm = best->xm;
    box.best_median = best_median;
    box.best_replicate_ys = best->replicate_ys;
    return box;
}

double mean_calibration_gap(const std::vector<CoverageRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("mean_calibration_gap: empty input");
    double gap = 0.0;
    for (const CoverageRow& r : rows) gap += std::abs(r.observed - r.expected);
    return gap / static_cast<double>(rows.size());
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows) {
    auto out = open_out(path);
    out << "tau,expected,observed,wilson_lo,wilson_hi,n\n";
    for (const CoverageRow& r : rows)
        out << format_double(r.tau) << "," << format_double(r.expected) << ","
            << format_double(r.observed) << "," << format_double(r.wilson_lo) << ","
            << format_double(r.wilson_hi) << "," << r.n << "\n";
}

void write_inclusion_csv(const std::string& path, const std::vector<InclusionRow>& rows) {
    auto out = open_out(path);
    out << "alpha,eps,delta,solver,replicates,y_mean,y_std,ci_lo,ci_hi,mu_hat,sigma_hat,"
           "included\n";
    for (const InclusionRow& r : rows)
        out << format_double(r.xm.alpha) << "," << format_double(r.xm.epsilon) << ","
            << format_double(r.xm.delta) << "," << to_string(r.xm.solver) << "," << r.replicates
            << "," << format_double(r.y_mean) << "," << format_double(r.y_std) << ","
            << format_double(r.ci_lo) << "," << format_double(r.ci_hi) << ","
            << format_double(r.mu_hat) << "," << format_double(r.sigma_hat) << ","
            << (r.included ? 1 : 0) << "\n";
}

void write_compare_csv(const std::string& path, const std::vector<BoxSummary>& rows) {
    auto out = open_out(path);
    out << "strategy,count,median,q1,q3,min,max,best_alpha,best_eps,best_delta,best_solver,"
           "best_median\n";
    for (const BoxSummary& r : rows)
        out << r.label << "," << r.count << "," << format_double(r.median) << ","
            << format_double(r.q1) << "," << format_double(r.q3) << "," << format_double(r.min)
            << "," << format_double(r.max) << "," << format_double(r.best_xm.alpha) << ","
            << format_double(r.best_xm.epsilon) << "," << format_double(r.best_xm.delta) << ","
            << to_string(r.best_xm.solver) << "," << format_double(r.best_median) << "\n";
}

void write_compare_json(const std::string& path, const std::vector<BoxSummary>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const BoxSummary& r : rows) {
        j.push_back({{"strategy", r.label},
                     {"count", r.count},
                     {"median", r.median},
                     {"q1", r.q1},
                     {"q3", r.q3},
                     {"min", r.min},
                     {"max", r.max},
                     {"best", {{"alpha", r.best_xm.alpha},
                               {"eps", r.best_xm.epsilon},
                               {"delta", r.best_xm.delta},
                               {"solver", to_string(r.best_xm.solver)},
                               {"median", r.best_median},
                               {"replicate_ys", r.best_replicate_ys}}}});
    }
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

}  // namespace stoprec
