/// @file report.hpp
/// @brief Calibration and comparison analytics: prediction-interval
/// coverage, Wilson score intervals, pointwise CI inclusion and box-plot
/// summaries, emitted as machine-readable CSV/JSON tables.

#ifndef STOPREC_REPORT_HPP
#define STOPREC_REPORT_HPP

#include <string>
#include <vector>

#include "stoprec/surrogate.hpp"
#include "stoprec/tuner.hpp"

namespace stoprec {

struct CoverageRow {
    double tau = 0.0;       ///< confidence level
    double expected = 0.0;  ///< = tau
    double observed = 0.0;  ///< empirical coverage p_hat
    double wilson_lo = 0.0;
    double wilson_hi = 0.0;
    std::size_t n = 0;
};

/// Symmetric prediction interval [mu - z_(1+tau)/2 sigma, mu + z_(1+tau)/2 sigma].
std::pair<double, double> prediction_interval(double mu, double sigma, double tau);

/// Two-sided Wilson score interval for a binomial proportion at critical
/// value z; bounds clamped to [0, 1].
std::pair<double, double> wilson_interval(double p_hat, std::size_t n, double z);

/// Fraction of observations inside their prediction interval at level tau,
/// with 95% Wilson bounds attached.
CoverageRow empirical_coverage(const std::vector<Prediction>& predictions,
                               const std::vector<double>& observations, double tau);

inline const std::vector<double>& default_tau_levels() {
    static const std::vector<double> taus{0.50, 0.68, 0.80, 0.90, 0.95, 0.99};
    return taus;
}

struct InclusionRow {
    McmcParams xm;
    double y_mean = 0.0;
    double y_std = 0.0;
    double ci_lo = 0.0;  ///< y_mean -+ t_{0.995, r-1} s / sqrt(r)
    double ci_hi = 0.0;
    double mu_hat = 0.0;
    double sigma_hat = 0.0;
    bool included = false;  ///< mu_hat inside the empirical 99% CI
    int replicates = 0;
};

/// Pointwise 99% CI inclusion per distinct x_M; rows ordered by
/// (alpha, eps, delta), matching an (eps x delta) heatmap per alpha.
std::vector<InclusionRow> pointwise_ci_inclusion(const std::vector<LabeledSample>& samples,
                                                 const std::vector<Prediction>& predictions);

struct BoxSummary {
    std::string label;
    std::size_t count = 0;  ///< explored x_M points
    double median = 0.0, q1 = 0.0, q3 = 0.0, min = 0.0, max = 0.0;
    McmcParams best_xm;
    double best_median = 0.0;
    std::vector<double> best_replicate_ys;
};

/// Box summary over per-x_M sample medians for one strategy's samples.
BoxSummary summarize_strategy(const std::string& label,
                              const std::vector<LabeledSample>& samples);

// CSV/JSON emission (deterministic shortest round-trip number formatting).
void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows);
void write_inclusion_csv(const std::string& path, const std::vector<InclusionRow>& rows);
void write_compare_csv(const std::string& path, const std::vector<BoxSummary>& rows);
void write_compare_json(const std::string& path, const std::vector<BoxSummary>& rows);

/// Mean absolute calibration gap over the tau levels: sum |p_hat - tau| / #levels.
double mean_calibration_gap(const std::vector<CoverageRow>& rows);

std::string format_double(double v);

}  // namespace stoprec

#endif  // STOPREC_REPORT_HPP
