#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sbc/model.hpp"

namespace sbc {

struct NormalPosterior {
  double mean;
  double sd;
};

/// Exact posterior of theta ~ N(prior_mean, prior_sd), y_i ~ N(theta, obs_sd).
/// Empty data returns the prior unchanged.
NormalPosterior conjugate_posterior(double prior_mean, double prior_sd, double obs_sd,
                                    const Dataset &data);

/// One-parameter normal model with known observation noise. Its posterior is
/// available in closed form, which makes it the oracle for everything else.
class ConjugateNormalModel : public Model {
public:
  struct Options {
    double prior_mean = 0.0;
    double prior_sd = 1.0;
    double obs_sd = 1.0;
    int observations = 10; ///< rows produced by simulate()
  };

  ConjugateNormalModel() : ConjugateNormalModel(Options{}) {}
  explicit ConjugateNormalModel(Options options);

  std::string id() const override { return "conjugate-normal"; }
  const std::vector<ParamInfo> &parameters() const override { return params_; }
  DataKind data_kind() const override { return DataKind::Grouped; }
  Dataset empty_data() const override { return Dataset::empty_of(DataKind::Grouped, 1); }

  Eigen::VectorXd prior_sample(RandomStream &rng) const override;
  Dataset simulate(const Eigen::VectorXd &theta, RandomStream &rng) const override;
  double log_prior(const Eigen::VectorXd &theta) const override;
  double log_likelihood(const Eigen::VectorXd &theta, const Dataset &data) const override;
  std::unique_ptr<LogDensity> posterior(const Dataset &data) const override;

  NormalPosterior exact_posterior(const Dataset &data) const;

  /// Single i.i.d. draw from the exact posterior. With empty data this
  /// consumes the stream exactly like prior_sample().
  double exact_draw(const Dataset &data, RandomStream &rng) const;

  const Options &options() const { return options_; }

private:
  Options options_;
  std::vector<ParamInfo> params_;
};

enum class Parameterization { Centered, NonCentered };

/**
 * Two-level normal model with J groups of I observations:
 *
 *   y_ij ~ N(mu_j, sigma), mu_j ~ N(mu0, tau), mu0 ~ N(0, 1),
 *   sigma, tau ~ half-normal(0, 1).
 *
 * The non-centered form samples z_j ~ N(0, 1) and sets mu_j = mu0 + tau z_j.
 * Parameter order is (mu0, tau, sigma, mu_1..mu_J) or (mu0, tau, sigma,
 * z_1..z_J).
 */
class HierarchicalModel : public Model {
public:
  HierarchicalModel(Parameterization parameterization, int groups = 50, int per_group = 5);

  std::string id() const override;
  const std::vector<ParamInfo> &parameters() const override { return params_; }
  DataKind data_kind() const override { return DataKind::Grouped; }
  Dataset empty_data() const override { return Dataset::empty_of(DataKind::Grouped, groups_); }
  std::vector<std::string> default_test_quantities() const override {
    return {"mu0", "tau", "sigma", kLoglikQuantity};
  }

  Eigen::VectorXd prior_sample(RandomStream &rng) const override;
  Dataset simulate(const Eigen::VectorXd &theta, RandomStream &rng) const override;
  double log_prior(const Eigen::VectorXd &theta) const override;
  double log_likelihood(const Eigen::VectorXd &theta, const Dataset &data) const override;
  std::unique_ptr<LogDensity> posterior(const Dataset &data) const override;

  /// mu_1..mu_J implied by a parameter vector of this parameterization.
  Eigen::VectorXd group_means(const Eigen::VectorXd &theta) const;

  /// Parameter vector of this parameterization with the given group means.
  Eigen::VectorXd from_group_means(double mu0, double tau, double sigma,
                                   const Eigen::VectorXd &mu) const;

  /// An "observed" dataset for a fixed (mu0, tau, sigma) regime: group means
  /// are drawn fresh from N(mu0, tau) and recorded in the returned vector.
  Dataset generate_observed(double mu0, double tau, double sigma, RandomStream &rng,
                            Eigen::VectorXd *theta_out = nullptr) const;

  Parameterization parameterization() const { return param_; }
  int groups() const { return groups_; }
  int per_group() const { return per_group_; }

private:
  Parameterization param_;
  int groups_;
  int per_group_;
  std::vector<ParamInfo> params_;
};

} // namespace sbc
