#include "sbc/models.hpp"

#include <cmath>
#include <limits>

#include "sbc/error.hpp"
#include "sbc/stats.hpp"

namespace sbc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_grouped(const Dataset &data, int max_groups) {
  if (data.kind != DataKind::Grouped)
    throw DataError("model expects grouped data (group,index,value)");
  if (data.groups > max_groups)
    throw DataError("dataset declares " + std::to_string(data.groups) + " groups but the model has " +
                    std::to_string(max_groups));
  for (const auto &o : data.grouped)
    if (o.group < 1 || o.group > max_groups)
      throw DataError("observation group " + std::to_string(o.group) +
                      " does not exist in a model with " + std::to_string(max_groups) +
                      " groups");
}

void require_finite(const Eigen::VectorXd &theta, Eigen::Index dim) {
  if (theta.size() != dim) throw Error("parameter vector has wrong length");
  if (!theta.allFinite()) throw Error("simulate: non-finite parameter");
}

// Sufficient statistics of grouped data: counts, means and within-group sums
// of squares, computed with a two-pass scheme for stability.
struct GroupStats {
  Eigen::VectorXd n;
  Eigen::VectorXd mean;
  Eigen::VectorXd ss;
  double total = 0.0;

  GroupStats(const Dataset &data, int groups)
      : n(Eigen::VectorXd::Zero(groups)), mean(Eigen::VectorXd::Zero(groups)),
        ss(Eigen::VectorXd::Zero(groups)) {
    for (const auto &o : data.grouped) {
      n(o.group - 1) += 1.0;
      mean(o.group - 1) += o.value;
    }
    for (int j = 0; j < groups; ++j)
      if (n(j) > 0) mean(j) /= n(j);
    for (const auto &o : data.grouped) {
      const double d = o.value - mean(o.group - 1);
      ss(o.group - 1) += d * d;
    }
    total = n.sum();
  }
};

class ConjugatePosterior final : public LogDensity {
public:
  ConjugatePosterior(const ConjugateNormalModel::Options &opt, const Dataset &data)
      : opt_(opt), stats_(data, 1) {}

  Eigen::Index dim() const override { return 1; }

  double log_density(const Eigen::VectorXd &u) const override {
    Eigen::VectorXd g(1);
    return log_density_gradient(u, g);
  }

  double log_density_gradient(const Eigen::VectorXd &u, Eigen::VectorXd &grad) const override {
    const double theta = u(0);
    if (!std::isfinite(theta)) return kNegInf;
    const double zp = (theta - opt_.prior_mean) / opt_.prior_sd;
    const double n = stats_.n(0);
    const double d = stats_.mean(0) - theta;
    const double s2 = opt_.obs_sd * opt_.obs_sd;
    grad.resize(1);
    grad(0) = -zp / opt_.prior_sd + n * d / s2;
    return -0.5 * zp * zp - (stats_.ss(0) + n * d * d) / (2.0 * s2);
  }

private:
  ConjugateNormalModel::Options opt_;
  GroupStats stats_;
};

// Unconstrained layout: (mu0, log tau, log sigma, mu_j or z_j).
class HierarchicalPosterior final : public LogDensity {
public:
  HierarchicalPosterior(Parameterization p, int groups, const Dataset &data)
      : param_(p), groups_(groups), stats_(data, groups) {}

  Eigen::Index dim() const override { return groups_ + 3; }

  double log_density(const Eigen::VectorXd &u) const override {
    Eigen::VectorXd g(dim());
    return log_density_gradient(u, g);
  }

  double log_density_gradient(const Eigen::VectorXd &u, Eigen::VectorXd &grad) const override {
    if (!u.allFinite()) return kNegInf;
    const double mu0 = u(0);
    const double log_tau = u(1);
    const double log_sigma = u(2);
    const double tau = std::exp(log_tau);
    const double sigma = std::exp(log_sigma);
    if (!(tau > 0.0) || !(sigma > 0.0) || !std::isfinite(tau) || !std::isfinite(sigma))
      return kNegInf;
    const double inv_s2 = 1.0 / (sigma * sigma);
    const auto latent = u.tail(groups_);

    grad.resize(dim());
    // Hyperpriors plus the log-Jacobian of both exp transforms.
    double lp = -0.5 * mu0 * mu0 - 0.5 * tau * tau - 0.5 * sigma * sigma + log_tau + log_sigma;
    grad(0) = -mu0;
    grad(1) = 1.0 - tau * tau;
    grad(2) = 1.0 - sigma * sigma;

    Eigen::VectorXd mu(groups_);
    if (param_ == Parameterization::Centered) {
      const double inv_t2 = 1.0 / (tau * tau);
      const Eigen::ArrayXd dev = latent.array() - mu0;
      const double sq = dev.square().sum();
      lp += -groups_ * log_tau - 0.5 * sq * inv_t2;
      grad(0) += dev.sum() * inv_t2;
      grad(1) += -groups_ + sq * inv_t2;
      grad.tail(groups_) = -dev.matrix() * inv_t2;
      mu = latent;
    } else {
      lp += -0.5 * latent.squaredNorm();
      grad.tail(groups_) = -latent;
      mu = (mu0 + tau * latent.array()).matrix();
    }

    const Eigen::ArrayXd resid = stats_.mean.array() - mu.array();
    const double sse = stats_.ss.sum() + (stats_.n.array() * resid.square()).sum();
    const double ll = -stats_.total * log_sigma - 0.5 * sse * inv_s2;
    grad(2) += -stats_.total + sse * inv_s2;
    const Eigen::ArrayXd r = stats_.n.array() * resid * inv_s2; // d ll / d mu_j

    if (param_ == Parameterization::Centered) {
      grad.tail(groups_).array() += r;
    } else {
      grad(0) += r.sum();
      grad(1) += tau * (r * latent.array()).sum();
      grad.tail(groups_).array() += tau * r;
    }
    const double total = lp + ll;
    return std::isfinite(total) ? total : kNegInf;
  }

private:
  Parameterization param_;
  int groups_;
  GroupStats stats_;
};

} // namespace

// ---------------------------------------------------------------------------
// Conjugate normal

NormalPosterior conjugate_posterior(double prior_mean, double prior_sd, double obs_sd,
                                    const Dataset &data) {
  if (!(prior_sd > 0.0) || !(obs_sd > 0.0))
    throw Error("conjugate_posterior: standard deviations must be positive");
  if (data.empty()) return {prior_mean, prior_sd};
  double sum = 0.0;
  for (const auto &o : data.grouped) sum += o.value;
  const double n = static_cast<double>(data.grouped.size());
  const double prec = 1.0 / (prior_sd * prior_sd) + n / (obs_sd * obs_sd);
  const double mean = (prior_mean / (prior_sd * prior_sd) + sum / (obs_sd * obs_sd)) / prec;
  return {mean, std::sqrt(1.0 / prec)};
}

ConjugateNormalModel::ConjugateNormalModel(Options options)
    : options_(options), params_{{"theta", Constraint::Real}} {
  if (!(options_.prior_sd > 0.0) || !(options_.obs_sd > 0.0) || options_.observations < 0)
    throw ConfigError("conjugate-normal: invalid options");
}

Eigen::VectorXd ConjugateNormalModel::prior_sample(RandomStream &rng) const {
  return Eigen::VectorXd::Constant(1, rng.normal(options_.prior_mean, options_.prior_sd));
}

Dataset ConjugateNormalModel::simulate(const Eigen::VectorXd &theta, RandomStream &rng) const {
  require_finite(theta, 1);
  Dataset d = empty_data();
  for (int i = 0; i < options_.observations; ++i)
    d.grouped.push_back({1, i + 1, rng.normal(theta(0), options_.obs_sd)});
  return d;
}

double ConjugateNormalModel::log_prior(const Eigen::VectorXd &theta) const {
  return stats::normal_lpdf(theta(0), options_.prior_mean, options_.prior_sd);
}

double ConjugateNormalModel::log_likelihood(const Eigen::VectorXd &theta,
                                            const Dataset &data) const {
  require_grouped(data, 1);
  double ll = 0.0;
  for (const auto &o : data.grouped) ll += stats::normal_lpdf(o.value, theta(0), options_.obs_sd);
  return ll;
}

std::unique_ptr<LogDensity> ConjugateNormalModel::posterior(const Dataset &data) const {
  require_grouped(data, 1);
  return std::make_unique<ConjugatePosterior>(options_, data);
}

NormalPosterior ConjugateNormalModel::exact_posterior(const Dataset &data) const {
  return conjugate_posterior(options_.prior_mean, options_.prior_sd, options_.obs_sd, data);
}

double ConjugateNormalModel::exact_draw(const Dataset &data, RandomStream &rng) const {
  const auto post = exact_posterior(data);
  return rng.normal(post.mean, post.sd);
}

// ---------------------------------------------------------------------------
// Hierarchical normal

HierarchicalModel::HierarchicalModel(Parameterization parameterization, int groups, int per_group)
    : param_(parameterization), groups_(groups), per_group_(per_group) {
  if (groups < 1 || per_group < 0) throw ConfigError("hierarchical: invalid group shape");
  params_ = {{"mu0", Constraint::Real}, {"tau", Constraint::Positive}, {"sigma", Constraint::Positive}};
  const std::string prefix = param_ == Parameterization::Centered ? "mu_" : "z_";
  for (int j = 1; j <= groups_; ++j) params_.push_back({prefix + std::to_string(j), Constraint::Real});
}

std::string HierarchicalModel::id() const {
  return param_ == Parameterization::Centered ? "hierarchical-centered"
                                              : "hierarchical-noncentered";
}

Eigen::VectorXd HierarchicalModel::prior_sample(RandomStream &rng) const {
  Eigen::VectorXd theta(dim());
  theta(0) = rng.normal();
  theta(1) = std::abs(rng.normal());
  theta(2) = std::abs(rng.normal());
  for (int j = 0; j < groups_; ++j) {
    const double z = rng.normal();
    theta(3 + j) = param_ == Parameterization::Centered ? theta(0) + theta(1) * z : z;
  }
  return theta;
}

Eigen::VectorXd HierarchicalModel::group_means(const Eigen::VectorXd &theta) const {
  if (param_ == Parameterization::Centered) return theta.tail(groups_);
  return (theta(0) + theta(1) * theta.tail(groups_).array()).matrix();
}

Eigen::VectorXd HierarchicalModel::from_group_means(double mu0, double tau, double sigma,
                                                    const Eigen::VectorXd &mu) const {
  if (mu.size() != groups_) throw Error("from_group_means: wrong number of groups");
  Eigen::VectorXd theta(dim());
  theta << mu0, tau, sigma,
      param_ == Parameterization::Centered ? mu : ((mu.array() - mu0) / tau).matrix();
  return theta;
}

Dataset HierarchicalModel::simulate(const Eigen::VectorXd &theta, RandomStream &rng) const {
  require_finite(theta, dim());
  if (!(theta(2) >= 0.0)) throw Error("simulate: sigma must be non-negative");
  const Eigen::VectorXd mu = group_means(theta);
  Dataset d = empty_data();
  d.grouped.reserve(static_cast<std::size_t>(groups_ * per_group_));
  for (int j = 0; j < groups_; ++j)
    for (int i = 0; i < per_group_; ++i)
      d.grouped.push_back({j + 1, i + 1, rng.normal(mu(j), theta(2))});
  return d;
}

Dataset HierarchicalModel::generate_observed(double mu0, double tau, double sigma,
                                             RandomStream &rng, Eigen::VectorXd *theta_out) const {
  Eigen::VectorXd mu(groups_);
  for (int j = 0; j < groups_; ++j) mu(j) = rng.normal(mu0, tau);
  const Eigen::VectorXd theta = from_group_means(mu0, tau, sigma, mu);
  if (theta_out) *theta_out = theta;
  return simulate(theta, rng);
}

double HierarchicalModel::log_prior(const Eigen::VectorXd &theta) const {
  const double mu0 = theta(0);
  const double tau = theta(1);
  const double sigma = theta(2);
  if (!(tau > 0.0) || !(sigma > 0.0)) return kNegInf;
  double lp = stats::normal_lpdf(mu0, 0.0, 1.0) + stats::half_normal_lpdf(tau, 1.0) +
              stats::half_normal_lpdf(sigma, 1.0);
  for (int j = 0; j < groups_; ++j)
    lp += param_ == Parameterization::Centered ? stats::normal_lpdf(theta(3 + j), mu0, tau)
                                               : stats::normal_lpdf(theta(3 + j), 0.0, 1.0);
  return lp;
}

double HierarchicalModel::log_likelihood(const Eigen::VectorXd &theta, const Dataset &data) const {
  require_grouped(data, groups_);
  const double sigma = theta(2);
  if (!(sigma > 0.0)) return kNegInf;
  const Eigen::VectorXd mu = group_means(theta);
  double ll = 0.0;
  for (const auto &o : data.grouped) ll += stats::normal_lpdf(o.value, mu(o.group - 1), sigma);
  return ll;
}

std::unique_ptr<LogDensity> HierarchicalModel::posterior(const Dataset &data) const {
  require_grouped(data, groups_);
  return std::make_unique<HierarchicalPosterior>(param_, groups_, data);
}

} // namespace sbc
