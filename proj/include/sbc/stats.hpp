#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace sbc::stats {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178; // ln sqrt(2 pi)

inline double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

/// Half-normal(0, sd) on x >= 0; -inf outside the support.
inline double half_normal_lpdf(double x, double sd) {
  if (!(x >= 0.0)) return -std::numeric_limits<double>::infinity();
  return std::numbers::ln2 + normal_lpdf(x, 0.0, sd);
}

double normal_cdf(double x);
double normal_quantile(double p);

/// Upper tail P(X > x) for X ~ chi-squared with `dof` degrees of freedom.
double chi2_upper_tail(double x, double dof);

/// Mean of N(mean, sd) truncated to (0, inf).
double positive_truncated_normal_mean(double mean, double sd);

/// Cumulative distribution of Binomial(n, p) tabulated at c = 0..n.
std::vector<double> binomial_cdf_table(int n, double p);

/// Two-sample Kolmogorov-Smirnov statistic D and its asymptotic p-value.
struct KsResult {
  double statistic;
  double p_value;
};
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Pearson chi-squared goodness of fit against equal expected counts.
struct Chi2Result {
  double statistic;
  double p_value;
};
Chi2Result chi2_uniform_counts(std::span<const long> counts);

} // namespace sbc::stats
