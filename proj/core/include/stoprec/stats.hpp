/// @file stats.hpp
/// @brief Scalar statistics shared by the acquisition and report modules.

#ifndef STOPREC_STATS_HPP
#define STOPREC_STATS_HPP

#include <cstddef>
#include <vector>

namespace stoprec::stats {

/// Standard normal density.
double normal_pdf(double z);

/// Standard normal CDF via the complementary error function; absolute
/// accuracy better than 1e-12 on [-8, 8].
double normal_cdf(double z);

/// Inverse standard normal CDF, p in (0, 1). Rational approximation refined
/// by one Halley step; absolute error below 1e-10.
double normal_quantile(double p);

/// Student-t quantile, p in (0, 1), dof >= 1.
double student_t_quantile(double p, int dof);

double mean(const std::vector<double>& xs);
/// Sample standard deviation, ddof = 1. Returns 0 for fewer than 2 values.
double sample_std(const std::vector<double>& xs);
/// Median (average of middle two for even length). Copies and sorts.
double median(std::vector<double> xs);
/// Linear-interpolation quantile (type 7) of an unsorted sample, q in [0,1].
double quantile(std::vector<double> xs, double q);

}  // namespace stoprec::stats

#endif  // STOPREC_STATS_HPP
