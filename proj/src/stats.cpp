#include "sbc/stats.hpp"

#include <algorithm>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace sbc::stats {

namespace {
// Built per call: these may run during static initialization elsewhere.
boost::math::normal_distribution<double> std_normal() { return {0.0, 1.0}; }
} // namespace

double normal_cdf(double x) { return boost::math::cdf(std_normal(), x); }

double normal_quantile(double p) { return boost::math::quantile(std_normal(), p); }

double chi2_upper_tail(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

double positive_truncated_normal_mean(double mean, double sd) {
  const double a = -mean / sd;
  const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  return mean + sd * phi / (1.0 - normal_cdf(a));
}

std::vector<double> binomial_cdf_table(int n, double p) {
  std::vector<double> cdf(static_cast<std::size_t>(n) + 1, 1.0);
  if (p <= 0.0) return cdf;
  if (p >= 1.0) {
    std::fill(cdf.begin(), cdf.end() - 1, 0.0);
    return cdf;
  }
  const boost::math::binomial_distribution<double> dist(n, p);
  for (int c = 0; c < n; ++c) cdf[static_cast<std::size_t>(c)] = boost::math::cdf(dist, c);
  return cdf;
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double en = std::sqrt(n * m / (n + m));
  // Asymptotic Kolmogorov distribution with the usual small-sample correction.
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

Chi2Result chi2_uniform_counts(std::span<const long> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0L));
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return {stat, chi2_upper_tail(stat, static_cast<double>(counts.size()) - 1.0)};
}

} // namespace sbc::stats
