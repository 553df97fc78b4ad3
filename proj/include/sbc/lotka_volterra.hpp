#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sbc/model.hpp"
#include "sbc/ode.hpp"

namespace sbc {

/// Predator-prey rates (per year), log-scale noise SDs and initial populations.
struct LvParams {
  double alpha = 1.0;
  double beta = 0.05;
  double gamma = 1.0;
  double delta = 0.05;
  double sigma_h = 0.25;
  double sigma_l = 0.25;
  double h0 = 30.0;
  double l0 = 5.0;

  /// Order: alpha, beta, gamma, delta, sigma_h, sigma_l, h0, l0.
  static LvParams from_vector(const Eigen::VectorXd &theta);
  Eigen::VectorXd to_vector() const;
  bool positive() const;
};

using LvState = Eigen::Vector2d; // (H, L)

/// (alpha H - beta H L, -gamma L + delta H L). Throws on non-finite input.
LvState lv_rhs(const LvState &state, const LvParams &p);

/// delta H - gamma ln H + beta L - alpha ln L; constant along exact flows.
double lv_invariant(const LvState &state, const LvParams &p);

inline constexpr double kLvStep = 0.01;

/// RK4 solution of the predator-prey system from (h0, l0) at t_grid[0].
Trajectory<LvState> lv_solve(const LvParams &p, std::span<const double> t_grid,
                             double h = kLvStep);

struct LvLogLik {
  double value;                        ///< -inf when the solve failed
  std::optional<double> failure_time;  ///< set when integration failed
};

/**
 * Joint log-normal log-likelihood of pelt counts. Years are measured from
 * `origin_year`, where the state equals (h0, l0); row order is irrelevant and
 * repeated years are allowed.
 */
LvLogLik lv_log_likelihood(const LvParams &p, const Dataset &data,
                           double origin_year = 1900.0, double h = kLvStep);

/**
 * Lotka-Volterra model with log-normal observation noise.
 *
 * Priors: alpha, gamma ~ N(1, 0.5) and beta, delta ~ N(0.05, 0.05), all
 * truncated to the positive half-line; log sigma_h, log sigma_l ~ N(-1, 1);
 * log h0, log l0 ~ N(log 30, 1). simulate() produces one row per year from
 * origin_year to origin_year + years.
 */
class LotkaVolterraModel : public Model {
public:
  struct Options {
    double origin_year = 1900.0;
    int years = 20; ///< simulate() emits years + 1 rows
    double step = kLvStep;
  };

  LotkaVolterraModel() : LotkaVolterraModel(Options{}) {}
  explicit LotkaVolterraModel(Options options);

  std::string id() const override { return "lotka-volterra"; }
  const std::vector<ParamInfo> &parameters() const override { return params_; }
  DataKind data_kind() const override { return DataKind::PeltSeries; }

  Eigen::VectorXd prior_sample(RandomStream &rng) const override;
  Dataset simulate(const Eigen::VectorXd &theta, RandomStream &rng) const override;
  double log_prior(const Eigen::VectorXd &theta) const override;
  double log_likelihood(const Eigen::VectorXd &theta, const Dataset &data) const override;
  std::unique_ptr<LogDensity> posterior(const Dataset &data) const override;

  const Options &options() const { return options_; }

private:
  Options options_;
  std::vector<ParamInfo> params_;
};

void write_trajectory_csv(const std::filesystem::path &path, const Trajectory<LvState> &traj,
                          double origin = 0.0);

} // namespace sbc
