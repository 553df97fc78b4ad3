#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbc/sampler.hpp"
#include "sbc/stats.hpp"

namespace sbc {

namespace {

std::vector<Eigen::VectorXd> split_halves(const std::vector<Eigen::VectorXd> &chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto &c : chains) {
    const Eigen::Index half = c.size() / 2;
    out.emplace_back(c.head(half));
    out.emplace_back(c.tail(half)); // drops the middle draw of odd-length chains
  }
  return out;
}

void require_shape(const std::vector<Eigen::VectorXd> &chains) {
  if (chains.empty()) throw DiagnosticError("no chains");
  const Eigen::Index n = chains.front().size();
  for (const auto &c : chains)
    if (c.size() != n) throw DiagnosticError("chains must have equal length");
  if (n < 4) throw DiagnosticError("chains are too short (need at least 4 draws each)");
  for (const auto &c : chains)
    if (!c.allFinite()) throw DiagnosticError("non-finite draw");
}

std::vector<Eigen::VectorXd> column(const std::vector<Chain> &chains, Eigen::Index q) {
  std::vector<Eigen::VectorXd> out;
  for (const auto &c : chains) out.emplace_back(c.draws.col(q));
  return out;
}

// Sample variance of chain means and the mean within-chain variance.
void between_within(const std::vector<Eigen::VectorXd> &chains, double &between_over_n,
                    double &within) {
  const auto m = static_cast<double>(chains.size());
  Eigen::VectorXd means(chains.size());
  within = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto n = static_cast<double>(chains[c].size());
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    within += (chains[c].array() - chains[c].mean()).square().sum() / (n - 1.0);
  }
  within /= m;
  between_over_n = m > 1 ? (means.array() - means.mean()).square().sum() / (m - 1.0) : 0.0;
}

} // namespace

std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd> &chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (Eigen::Index i = 0; i < chains[c].size(); ++i)
      pooled.emplace_back(chains[c](i), pooled.size());
  const auto total = static_cast<double>(pooled.size());
  std::vector<double> z(pooled.size());
  std::sort(pooled.begin(), pooled.end());
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // 1-based average
    const double score = stats::normal_quantile((avg_rank - 0.375) / (total + 0.25));
    for (std::size_t k = i; k < j; ++k) z[pooled[k].second] = score;
    i = j;
  }
  std::vector<Eigen::VectorXd> out;
  std::size_t pos = 0;
  for (const auto &c : chains) {
    Eigen::VectorXd v(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) v(i) = z[pos++];
    out.push_back(std::move(v));
  }
  return out;
}

double split_rhat(const std::vector<Eigen::VectorXd> &chains) {
  require_shape(chains);
  const auto split = rank_normalize(split_halves(chains));
  if (split.size() < 2) throw DiagnosticError("split_rhat needs at least two split chains");
  const auto n = static_cast<double>(split.front().size());
  double b_over_n = 0.0;
  double w = 0.0;
  between_within(split, b_over_n, w);
  if (!(w > 0.0)) throw DiagnosticError("split_rhat undefined: zero within-chain variance");
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

double split_rhat(const std::vector<Chain> &chains, Eigen::Index quantity) {
  return split_rhat(column(chains, quantity));
}

double ess_bulk(const std::vector<Eigen::VectorXd> &chains) {
  require_shape(chains);
  const auto split = rank_normalize(split_halves(chains));
  const auto m = static_cast<double>(split.size());
  const Eigen::Index n = split.front().size();
  const auto nd = static_cast<double>(n);

  double b_over_n = 0.0;
  double w = 0.0;
  between_within(split, b_over_n, w);
  if (!(w > 0.0)) throw DiagnosticError("ess_bulk undefined: zero within-chain variance");
  const double var_plus = (nd - 1.0) / nd * w + (m > 1 ? b_over_n : 0.0);

  std::vector<Eigen::VectorXd> centered;
  for (const auto &c : split) centered.emplace_back(c.array() - c.mean());
  // Mean over chains of the biased (1/n) autocovariance at lag t.
  const auto acov = [&](Eigen::Index t) {
    double s = 0.0;
    for (const auto &c : centered) s += c.head(n - t).dot(c.tail(n - t)) / nd;
    return s / m;
  };
  const auto rho = [&](Eigen::Index t) { return 1.0 - (w - acov(t)) / var_plus; };

  // Geyer's initial positive sequence on paired autocorrelations.
  std::vector<double> r(static_cast<std::size_t>(n) + 1, 0.0);
  r[0] = 1.0;
  r[1] = rho(1);
  Eigen::Index t = 1;
  double even = r[0];
  double odd = r[1];
  while (t < n - 5 && even + odd > 0.0) {
    even = rho(t + 1);
    odd = rho(t + 2);
    if (even + odd >= 0.0) {
      r[static_cast<std::size_t>(t + 1)] = even;
      r[static_cast<std::size_t>(t + 2)] = odd;
    }
    t += 2;
  }
  const Eigen::Index max_t = t;
  if (even > 0.0) r[static_cast<std::size_t>(max_t + 1)] = even;

  // Initial monotone sequence.
  for (Eigen::Index k = 1; k <= max_t - 2; k += 2) {
    const auto i = static_cast<std::size_t>(k);
    if (r[i + 1] + r[i + 2] > r[i - 1] + r[i]) {
      r[i + 1] = 0.5 * (r[i - 1] + r[i]);
      r[i + 2] = r[i + 1];
    }
  }
  double sum = 0.0;
  for (Eigen::Index k = 0; k <= max_t; ++k) sum += r[static_cast<std::size_t>(k)];
  const double total = m * nd;
  double tau = -1.0 + 2.0 * sum + r[static_cast<std::size_t>(max_t + 1)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double ess_bulk(const std::vector<Chain> &chains, Eigen::Index quantity) {
  return ess_bulk(column(chains, quantity));
}

} // namespace sbc
