#include <doctest.h>

#include <stdexcept>
#include <tuple>
#include <algorithm>

#include <cmath>

#include "stoprec/report.hpp"
#include "stoprec/rng.hpp"
#include "stoprec/stats.hpp"

using namespace stoprec;

TEST_CASE("prediction interval values") {
    const auto [lo95, hi95] = prediction_interval(0.0, 1.0, 0.95);
    CHECK(lo95 == doctest::Approx(-1.95996).epsilon(1e-5));
    CHECK(hi95 == doctest::Approx(1.95996).epsilon(1e-5));

    const auto [lo_tiny, hi_tiny] = prediction_interval(0.4, 1.0, 1e-12);
    CHECK(lo_tiny == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(hi_tiny == doctest::Approx(0.4).epsilon(1e-9));

    const auto [lo68, hi68] = prediction_interval(0.8, 0.05, 0.68);
    CHECK(lo68 == doctest::Approx(0.7503).epsilon(2e-4));
    CHECK(hi68 == doctest::Approx(0.8497).epsilon(2e-4));

    CHECK_THROWS_AS(prediction_interval(0.0, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("wilson interval frozen values") {
    const auto [lo0, hi0] = wilson_interval(0.0, 10, 1.95996);
    CHECK(lo0 == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(hi0 == doctest::Approx(0.27753).epsilon(1e-4));

    const auto [lo5, hi5] = wilson_interval(0.5, 640, 1.95996);
    CHECK(lo5 == doctest::Approx(0.46138).epsilon(1e-4));
    CHECK(hi5 == doctest::Approx(0.53862).epsilon(1e-4));

    // n -> infinity collapses to p_hat
    const auto [lo_inf, hi_inf] = wilson_interval(0.3, 100000000, 1.95996);
    CHECK(lo_inf == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(hi_inf == doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("wilson bounds always bracket p_hat inside [0,1]") {
    for (double p : {0.0, 0.01, 0.25, 0.5, 0.77, 1.0})
        for (std::size_t n : {1ul, 5ul, 40ul, 1000ul}) {
            const auto [lo, hi] = wilson_interval(p, n, 1.959963984540054);
            CHECK(lo >= 0.0);
            CHECK(hi <= 1.0);
            CHECK(lo <= p + 1e-12);
            CHECK(hi >= p - 1e-12);
        }
}

TEST_CASE("empirical coverage: 2 of 3 inside the 68% interval") {
    const std::vector<Prediction> preds(3, Prediction{0.0, 1.0});
    const std::vector<double> obs{-0.5, 0.5, 2.0};
    const CoverageRow row = empirical_coverage(preds, obs, 0.68);
    CHECK(row.observed == doctest::Approx(2.0 / 3.0));
    CHECK(row.n == 3);
    CHECK(row.wilson_lo <= row.observed);
    CHECK(row.wilson_hi >= row.observed);

    const std::vector<double> at_mu{0.0, 0.0, 0.0};
    for (double tau : default_tau_levels())
        CHECK(empirical_coverage(preds, at_mu, tau).observed == 1.0);

    CHECK_THROWS_AS(empirical_coverage({}, {}, 0.5), std::invalid_argument);
}

TEST_CASE("coverage is monotone nondecreasing in tau") {
    std::vector<Prediction> preds;
    std::vector<double> obs;
    for (int i = 0; i < 200; ++i) {
        preds.push_back({0.5 + 0.1 * (i % 7), 0.05 + 0.01 * (i % 5)});
        obs.push_back(0.5 + 0.3 * (rng::uniform01(3, rng::kTestOracle, i, 3, 0) - 0.5));
    }
    double prev = -1.0;
    for (double tau : default_tau_levels()) {
        const double p = empirical_coverage(preds, obs, tau).observed;
        CHECK(p >= prev);
        prev = p;
    }
}

TEST_CASE("coverage matches a brute-force recount on a 640-observation replay") {
    std::vector<Prediction> preds;
    std::vector<double> obs;
    for (int i = 0; i < 640; ++i) {
        preds.push_back({rng::uniform(5, rng::kTestOracle, i, 4, 0, 0.2, 1.4),
                         rng::uniform(5, rng::kTestOracle, i, 4, 1, 0.02, 0.3)});
        obs.push_back(rng::uniform(5, rng::kTestOracle, i, 4, 2, 0.0, 1.6));
    }
    const double tau = 0.90;
    const CoverageRow row = empirical_coverage(preds, obs, tau);
    // independent recount with its own z
    const double z = stats::normal_quantile(0.5 * (1.0 + tau));
    std::size_t inside = 0;
    for (int i = 0; i < 640; ++i)
        if (std::abs(obs[i] - preds[i].mu_hat) <= z * preds[i].sigma_hat) ++inside;
    CHECK(row.observed == doctest::Approx(inside / 640.0).epsilon(1e-15));
}

TEST_CASE("pointwise CI inclusion") {
    LabeledSample s;
    s.matrix_id = "m";
    s.xm = {1.0, 0.5, 0.5, SolverKind::GMRES};
    s.replicate_ys = {0.9, 1.0, 1.1, 0.95, 1.05, 0.85, 1.15, 1.0, 0.98, 1.02};
    s.y_mean = stats::mean(s.replicate_ys);
    s.y_std = stats::sample_std(s.replicate_ys);

    // mu_hat = y_mean is always included for s > 0
    auto rows = pointwise_ci_inclusion({s}, {Prediction{s.y_mean, 0.1}});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].included);
    CHECK(rows[0].replicates == 10);
    // t quantile for r=10 at 99%: 3.2498
    const double half = rows[0].ci_hi - rows[0].y_mean;
    CHECK(half == doctest::Approx(3.2498 * s.y_std / std::sqrt(10.0)).epsilon(1e-4));

    // degenerate interval: s = 0, mu_hat != y_mean is excluded
    LabeledSample flat = s;
    flat.replicate_ys.assign(10, 0.7);
    flat.y_mean = 0.7;
    flat.y_std = 0.0;
    auto rows2 = pointwise_ci_inclusion({flat}, {Prediction{0.71, 0.1}});
    CHECK_FALSE(rows2[0].included);
    auto rows3 = pointwise_ci_inclusion({flat}, {Prediction{0.7, 0.1}});
    CHECK(rows3[0].included);
}

TEST_CASE("strategy summary and recounted medians") {
    std::vector<LabeledSample> samples;
    for (int i = 0; i < 9; ++i) {
        LabeledSample s;
        s.matrix_id = "m";
        s.strategy = "grid";
        s.xm = {1.0 + i, 0.5, 0.5, SolverKind::GMRES};
        for (int r = 0; r < 10; ++r)
            s.replicate_ys.push_back(0.5 + 0.05 * i + 0.01 * r);
        s.y_mean = stats::mean(s.replicate_ys);
        s.y_std = stats::sample_std(s.replicate_ys);
        samples.push_back(s);
    }
    const BoxSummary box = summarize_strategy("grid", samples);
    CHECK(box.count == 9);
    CHECK(box.min <= box.q1);
    CHECK(box.q1 <= box.median);
    CHECK(box.median <= box.q3);
    CHECK(box.q3 <= box.max);
    CHECK(box.best_xm.alpha == 1.0);  // smallest offset wins
    // independent recount of the best median
    CHECK(box.best_median == doctest::Approx(stats::median(samples[0].replicate_ys)));

    // single sample: degenerate box
    const BoxSummary single = summarize_strategy("one", {samples[4]});
    CHECK(single.min == single.max);
    CHECK(single.q1 == single.median);
}

TEST_CASE("mean calibration gap") {
    std::vector<CoverageRow> rows;
    for (double tau : default_tau_levels()) {
        CoverageRow r;
        r.tau = r.expected = tau;
        r.observed = tau;  // perfectly calibrated
        rows.push_back(r);
    }
    CHECK(mean_calibration_gap(rows) == 0.0);
    rows[0].observed = rows[0].expected - 0.12;
    CHECK(mean_calibration_gap(rows) == doctest::Approx(0.02));
}
