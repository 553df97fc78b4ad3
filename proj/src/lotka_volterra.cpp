#include "sbc/lotka_volterra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "sbc/gradient.hpp"
#include "sbc/stats.hpp"

namespace sbc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Truncation masses of the positive-truncated rate priors.
const double kLogMassAlpha = std::log(stats::normal_cdf(1.0 / 0.5));
const double kLogMassBeta = std::log(stats::normal_cdf(0.05 / 0.05));
const double kLog30 = std::log(30.0);

double positive_normal_draw(double mean, double sd, RandomStream &rng) {
  for (;;) {
    const double x = rng.normal(mean, sd);
    if (x > 0.0) return x;
  }
}

double lognormal_lpdf(double x, double mu, double sd) {
  if (!(x > 0.0)) return kNegInf;
  const double lx = std::log(x);
  return stats::normal_lpdf(lx, mu, sd) - lx;
}

// Sorted distinct observation times with a row -> grid index map.
struct PeltGrid {
  std::vector<double> times;
  std::vector<std::size_t> row_index;
  Eigen::VectorXd log_hare;
  Eigen::VectorXd log_lynx;

  PeltGrid(const Dataset &data, double origin_year, double h) {
    if (data.kind != DataKind::PeltSeries)
      throw DataError("lotka-volterra expects pelt data (year,hare_pelts,lynx_pelts)");
    times.push_back(0.0);
    for (const auto &o : data.pelts) {
      const double t = o.year - origin_year;
      if (t < 0.0) throw DataError("pelt year precedes the model origin year");
      step_count(0.0, t, h); // validates the grid
      times.push_back(t);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    log_hare.resize(static_cast<Eigen::Index>(data.pelts.size()));
    log_lynx.resize(static_cast<Eigen::Index>(data.pelts.size()));
    for (std::size_t r = 0; r < data.pelts.size(); ++r) {
      const double t = data.pelts[r].year - origin_year;
      row_index.push_back(static_cast<std::size_t>(
          std::lower_bound(times.begin(), times.end(), t) - times.begin()));
      log_hare(static_cast<Eigen::Index>(r)) = std::log(data.pelts[r].hare);
      log_lynx(static_cast<Eigen::Index>(r)) = std::log(data.pelts[r].lynx);
    }
  }

  LvLogLik evaluate(const LvParams &p, double h) const {
    if (!p.positive()) return {kNegInf, std::nullopt};
    Trajectory<LvState> traj;
    try {
      traj = lv_solve(p, times, h);
    } catch (const IntegrationFailure &f) {
      return {kNegInf, f.time()};
    }
    double ll = 0.0;
    for (std::size_t r = 0; r < row_index.size(); ++r) {
      const LvState &s = traj.states[row_index[r]];
      const auto ri = static_cast<Eigen::Index>(r);
      ll += stats::normal_lpdf(log_hare(ri), std::log(s(0)), p.sigma_h) +
            stats::normal_lpdf(log_lynx(ri), std::log(s(1)), p.sigma_l);
    }
    return {ll, std::nullopt};
  }
};

class LvPosterior final : public LogDensity {
public:
  LvPosterior(const LotkaVolterraModel &model, const Dataset &data)
      : model_(model), grid_(data, model.options().origin_year, model.options().step),
        constraints_(model.constraints()) {}

  Eigen::Index dim() const override { return 8; }

  double log_density(const Eigen::VectorXd &u) const override {
    if (!u.allFinite()) return kNegInf;
    const auto t = to_constrained(constraints_, u);
    const double lp = model_.log_prior(t.values);
    if (!std::isfinite(lp)) return kNegInf;
    const double ll = grid_.evaluate(LvParams::from_vector(t.values), model_.options().step).value;
    const double total = lp + ll + t.log_jacobian;
    return std::isfinite(total) ? total : kNegInf;
  }

  double log_density_gradient(const Eigen::VectorXd &u, Eigen::VectorXd &grad) const override {
    const double value = log_density(u);
    if (!std::isfinite(value)) return value;
    try {
      grad = finite_diff_grad([this](const Eigen::VectorXd &x) { return log_density(x); }, u);
    } catch (const FiniteDiffError &) {
      return kNegInf;
    }
    return value;
  }

private:
  const LotkaVolterraModel &model_;
  PeltGrid grid_;
  std::vector<Constraint> constraints_;
};

} // namespace

LvParams LvParams::from_vector(const Eigen::VectorXd &theta) {
  if (theta.size() != 8) throw Error("LvParams: expected 8 values");
  return {theta(0), theta(1), theta(2), theta(3), theta(4), theta(5), theta(6), theta(7)};
}

Eigen::VectorXd LvParams::to_vector() const {
  Eigen::VectorXd v(8);
  v << alpha, beta, gamma, delta, sigma_h, sigma_l, h0, l0;
  return v;
}

bool LvParams::positive() const {
  const Eigen::VectorXd v = to_vector();
  return v.allFinite() && (v.array() > 0.0).all();
}

LvState lv_rhs(const LvState &s, const LvParams &p) {
  if (!s.allFinite() || !p.to_vector().allFinite()) throw Error("lv_rhs: non-finite input");
  const double hl = s(0) * s(1);
  return {p.alpha * s(0) - p.beta * hl, -p.gamma * s(1) + p.delta * hl};
}

double lv_invariant(const LvState &s, const LvParams &p) {
  if (!(s(0) > 0.0) || !(s(1) > 0.0)) throw Error("lv_invariant: populations must be positive");
  return p.delta * s(0) - p.gamma * std::log(s(0)) + p.beta * s(1) - p.alpha * std::log(s(1));
}

Trajectory<LvState> lv_solve(const LvParams &p, std::span<const double> t_grid, double h) {
  const auto rhs = [&p](double, const LvState &s) -> LvState {
    const double hl = s(0) * s(1);
    return {p.alpha * s(0) - p.beta * hl, -p.gamma * s(1) + p.delta * hl};
  };
  return rk4_solve(rhs, LvState(p.h0, p.l0), t_grid, h, PositiveState{});
}

LvLogLik lv_log_likelihood(const LvParams &p, const Dataset &data, double origin_year, double h) {
  return PeltGrid(data, origin_year, h).evaluate(p, h);
}

LotkaVolterraModel::LotkaVolterraModel(Options options) : options_(options) {
  if (options_.years < 0 || !(options_.step > 0.0))
    throw ConfigError("lotka-volterra: invalid options");
  for (const char *name : {"alpha", "beta", "gamma", "delta", "sigma_h", "sigma_l", "h0", "l0"})
    params_.push_back({name, Constraint::Positive});
}

Eigen::VectorXd LotkaVolterraModel::prior_sample(RandomStream &rng) const {
  LvParams p;
  p.alpha = positive_normal_draw(1.0, 0.5, rng);
  p.beta = positive_normal_draw(0.05, 0.05, rng);
  p.gamma = positive_normal_draw(1.0, 0.5, rng);
  p.delta = positive_normal_draw(0.05, 0.05, rng);
  p.sigma_h = std::exp(rng.normal(-1.0, 1.0));
  p.sigma_l = std::exp(rng.normal(-1.0, 1.0));
  p.h0 = std::exp(rng.normal(kLog30, 1.0));
  p.l0 = std::exp(rng.normal(kLog30, 1.0));
  return p.to_vector();
}

Dataset LotkaVolterraModel::simulate(const Eigen::VectorXd &theta, RandomStream &rng) const {
  if (theta.size() != 8 || !theta.allFinite()) throw Error("simulate: non-finite parameter");
  const LvParams p = LvParams::from_vector(theta);
  if (!p.positive()) throw Error("simulate: parameters must be positive");
  std::vector<double> grid;
  for (int t = 0; t <= options_.years; ++t) grid.push_back(t);
  const auto traj = lv_solve(p, grid, options_.step);
  Dataset d = empty_data();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto &s = traj.states[k];
    d.pelts.push_back({options_.origin_year + grid[k],
                       std::exp(rng.normal(std::log(s(0)), p.sigma_h)),
                       std::exp(rng.normal(std::log(s(1)), p.sigma_l))});
  }
  return d;
}

double LotkaVolterraModel::log_prior(const Eigen::VectorXd &theta) const {
  const LvParams p = LvParams::from_vector(theta);
  if (!p.positive()) return kNegInf;
  return stats::normal_lpdf(p.alpha, 1.0, 0.5) - kLogMassAlpha +
         stats::normal_lpdf(p.gamma, 1.0, 0.5) - kLogMassAlpha +
         stats::normal_lpdf(p.beta, 0.05, 0.05) - kLogMassBeta +
         stats::normal_lpdf(p.delta, 0.05, 0.05) - kLogMassBeta +
         lognormal_lpdf(p.sigma_h, -1.0, 1.0) + lognormal_lpdf(p.sigma_l, -1.0, 1.0) +
         lognormal_lpdf(p.h0, kLog30, 1.0) + lognormal_lpdf(p.l0, kLog30, 1.0);
}

double LotkaVolterraModel::log_likelihood(const Eigen::VectorXd &theta, const Dataset &data) const {
  return lv_log_likelihood(LvParams::from_vector(theta), data, options_.origin_year, options_.step)
      .value;
}

std::unique_ptr<LogDensity> LotkaVolterraModel::posterior(const Dataset &data) const {
  return std::make_unique<LvPosterior>(*this, data);
}

void write_trajectory_csv(const std::filesystem::path &path, const Trajectory<LvState> &traj,
                          double origin) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trajectory " + path.string());
  out << "time,H,L\n";
  char buf[128];
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", origin + traj.times[k],
                  traj.states[k](0), traj.states[k](1));
    out << buf;
  }
}

} // namespace sbc
