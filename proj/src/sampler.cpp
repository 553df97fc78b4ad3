#include "sbc/sampler.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace sbc {

namespace {

constexpr int kInitAttempts = 100;

struct Point {
  Eigen::VectorXd q;
  Eigen::VectorXd grad;
  double log_density = -std::numeric_limits<double>::infinity();
};

Point initialize(const LogDensity &target, const SamplerConfig &config, RandomStream &rng) {
  Point pt;
  pt.q.resize(target.dim());
  pt.grad.resize(target.dim());
  for (int attempt = 0; attempt < kInitAttempts; ++attempt) {
    for (Eigen::Index k = 0; k < pt.q.size(); ++k)
      pt.q(k) = rng.uniform(-config.init_radius, config.init_radius);
    pt.log_density = target.log_density_gradient(pt.q, pt.grad);
    if (std::isfinite(pt.log_density) && pt.grad.allFinite()) return pt;
  }
  throw SamplerError("sampler initialization failed: no finite log density after " +
                     std::to_string(kInitAttempts) + " attempts");
}

struct Transition {
  double accept_stat = 0.0;
  bool divergent = false;
  bool nonfinite = false;
  int steps = 0;
};

class HmcKernel {
public:
  HmcKernel(const LogDensity &target, const SamplerConfig &config)
      : target_(target), config_(config) {}

  Eigen::VectorXd inv_mass;

  Transition transition(Point &pt, double eps, int steps, RandomStream &rng) const {
    const Eigen::Index d = pt.q.size();
    Eigen::VectorXd p(d);
    for (Eigen::Index k = 0; k < d; ++k) p(k) = rng.normal() / std::sqrt(inv_mass(k));
    const double h0 = -pt.log_density + kinetic(p);

    Eigen::VectorXd q = pt.q;
    Eigen::VectorXd grad = pt.grad;
    double lp = pt.log_density;
    bool over_threshold = false;
    const auto observer = [&](const Eigen::VectorXd &, const Eigen::VectorXd &pp, double l) {
      const double h = -l + kinetic(pp);
      if (!std::isfinite(h) || h - h0 > config_.divergence_threshold) {
        over_threshold = true;
        return false;
      }
      return true;
    };
    const auto grad_fn = [this](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
      return target_.log_density_gradient(x, g);
    };
    Transition t;
    t.steps = steps;
    const bool ok = leapfrog(grad_fn, q, p, grad, lp, eps, steps, inv_mass, observer);
    if (!ok) {
      t.divergent = true;
      t.nonfinite = !over_threshold;
      return t;
    }
    const double dh = -lp + kinetic(p) - h0;
    t.accept_stat = std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
    if (rng.uniform() < t.accept_stat) {
      pt.q = std::move(q);
      pt.grad = std::move(grad);
      pt.log_density = lp;
    }
    return t;
  }

  // Hoffman and Gelman's heuristic: double or halve until the one-step
  // acceptance probability crosses 1/2.
  double reasonable_step(const Point &pt, RandomStream &rng) const {
    double eps = 1.0;
    const auto accept_prob = [&](double e) {
      Eigen::VectorXd p(pt.q.size());
      for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = rng.normal() / std::sqrt(inv_mass(k));
      const double h0 = -pt.log_density + kinetic(p);
      Eigen::VectorXd q = pt.q;
      Eigen::VectorXd grad = pt.grad;
      double lp = pt.log_density;
      const auto grad_fn = [this](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
        return target_.log_density_gradient(x, g);
      };
      if (!leapfrog(grad_fn, q, p, grad, lp, e, 1, inv_mass)) return 0.0;
      const double dh = -lp + kinetic(p) - h0;
      return std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
    };
    double a = accept_prob(eps);
    const int dir = a > 0.5 ? 1 : -1;
    for (int i = 0; i < 60; ++i) {
      if (dir == 1 ? !(a > 0.5) : !(a < 0.5)) break;
      eps = dir == 1 ? eps * 2.0 : eps * 0.5;
      a = accept_prob(eps);
    }
    return std::clamp(eps, 1e-8, 1e3);
  }

  int path_steps(double eps, RandomStream &rng) const {
    const double base = std::clamp(std::ceil(config_.integration_time / eps), 1.0,
                                   static_cast<double>(config_.max_leapfrog_steps));
    const double jitter = config_.path_length_jitter * (2.0 * rng.uniform() - 1.0);
    const double steps = std::round(base * (1.0 + jitter));
    return static_cast<int>(std::clamp(steps, 1.0, static_cast<double>(config_.max_leapfrog_steps)));
  }

private:
  double kinetic(const Eigen::VectorXd &p) const {
    return 0.5 * (p.array().square() * inv_mass.array()).sum();
  }

  const LogDensity &target_;
  const SamplerConfig &config_;
};

// Running mean/variance (Welford).
class Welford {
public:
  explicit Welford(Eigen::Index d) : mean_(Eigen::VectorXd::Zero(d)), m2_(Eigen::VectorXd::Zero(d)) {}
  void add(const Eigen::VectorXd &x) {
    ++n_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_.array() += delta.array() * (x - mean_).array();
  }
  long count() const { return n_; }
  Eigen::VectorXd variance() const { return m2_ / static_cast<double>(std::max(n_ - 1, 1L)); }

private:
  Eigen::VectorXd mean_, m2_;
  long n_ = 0;
};

Eigen::VectorXd regularized_variance(const Welford &w) {
  Eigen::VectorXd var = w.variance();
  const double reg = 1e-3 * var.mean();
  var.array() += reg;
  for (Eigen::Index k = 0; k < var.size(); ++k)
    if (!(var(k) > 0.0) || !std::isfinite(var(k))) var(k) = 1.0;
  return var;
}

} // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("sampler.chains must be positive");
  if (warmup_draws < 1) throw ConfigError("sampler.warmup_draws must be positive");
  if (keep_draws < 1) throw ConfigError("sampler.keep_draws must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ConfigError("sampler.target_accept must lie in (0, 1)");
  if (max_leapfrog_steps < 1) throw ConfigError("sampler.max_leapfrog_steps must be positive");
  if (!(path_length_jitter >= 0.0 && path_length_jitter <= 1.0))
    throw ConfigError("sampler.path_length_jitter must lie in [0, 1]");
  if (!(integration_time > 0.0)) throw ConfigError("sampler.integration_time must be positive");
  if (!(divergence_threshold > 0.0))
    throw ConfigError("sampler.divergence_threshold must be positive");
  if (!(init_radius > 0.0)) throw ConfigError("sampler.init_radius must be positive");
  if (fixed_step_size < 0.0) throw ConfigError("sampler.fixed_step_size must be non-negative");
}

Chain hmc_chain(const LogDensity &target, const SamplerConfig &config, RandomStream &rng) {
  config.validate();
  const Eigen::Index d = target.dim();
  Point pt = initialize(target, config, rng);
  HmcKernel kernel(target, config);
  kernel.inv_mass = Eigen::VectorXd::Ones(d);

  const bool adapt = config.fixed_step_size <= 0.0;
  double eps = adapt ? kernel.reasonable_step(pt, rng) : config.fixed_step_size;
  DualAverage<double> da(eps, config.target_accept);

  // Warmup: step size only for the first half, then diagonal variance is
  // collected over the second half up to a short closing window in which the
  // step size is re-tuned against the new metric.
  const int w = config.warmup_draws;
  const int mass_begin = w / 2;
  const int mass_end = w - std::max(w / 4, std::min(w - mass_begin, 20));
  Welford var(d);

  Chain chain;
  int warmup_divergent = 0;
  for (int it = 0; it < w; ++it) {
    const Transition t = kernel.transition(pt, eps, kernel.path_steps(eps, rng), rng);
    chain.leapfrog_steps += t.steps;
    if (t.divergent) ++warmup_divergent;
    if (t.nonfinite) ++chain.nonfinite_rejections;
    if (adapt) eps = da.update(t.accept_stat);
    if (it >= mass_begin && it < mass_end) var.add(pt.q);
    if (it + 1 == mass_end && var.count() >= 5) {
      kernel.inv_mass = regularized_variance(var);
      if (adapt) {
        eps = kernel.reasonable_step(pt, rng);
        da.restart(eps);
      }
    }
  }
  if (warmup_divergent == w) throw SamplerError("every warmup transition diverged");
  if (adapt) eps = da.final();
  chain.warmup_divergences = warmup_divergent;

  chain.draws.resize(config.keep_draws, d);
  chain.accept_stats.resize(config.keep_draws);
  chain.divergent.assign(static_cast<std::size_t>(config.keep_draws), false);
  for (int it = 0; it < config.keep_draws; ++it) {
    const Transition t = kernel.transition(pt, eps, kernel.path_steps(eps, rng), rng);
    chain.leapfrog_steps += t.steps;
    chain.accept_stats(it) = t.accept_stat;
    if (t.divergent) {
      chain.divergent[static_cast<std::size_t>(it)] = true;
      ++chain.divergence_count;
    }
    if (t.nonfinite) ++chain.nonfinite_rejections;
    chain.draws.row(it) = pt.q.transpose();
  }
  chain.step_size = eps;
  chain.mass_diag = kernel.inv_mass.cwiseInverse();
  return chain;
}

Chain rwm_chain(const LogDensity &target, const SamplerConfig &config, RandomStream &rng) {
  config.validate();
  const Eigen::Index d = target.dim();
  Point pt = initialize(target, config, rng);
  double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
  constexpr double kTarget = 0.234;

  Chain chain;
  const auto step = [&](double scale, double &accept) {
    Eigen::VectorXd prop(d);
    for (Eigen::Index k = 0; k < d; ++k) prop(k) = pt.q(k) + scale * rng.normal();
    const double lp = target.log_density(prop);
    if (!std::isfinite(lp)) {
      ++chain.nonfinite_rejections;
      accept = 0.0;
      return;
    }
    // Symmetric proposal: the density ratio alone decides.
    accept = std::min(1.0, std::exp(lp - pt.log_density));
    if (rng.uniform() < accept) {
      pt.q = std::move(prop);
      pt.log_density = lp;
    }
  };

  for (int it = 0; it < config.warmup_draws; ++it) {
    double a = 0.0;
    step(std::exp(log_scale), a);
    log_scale += (a - kTarget) * std::pow(it + 1.0, -0.6);
  }
  const double scale = std::exp(log_scale);
  chain.draws.resize(config.keep_draws, d);
  chain.accept_stats.resize(config.keep_draws);
  chain.divergent.assign(static_cast<std::size_t>(config.keep_draws), false);
  for (int it = 0; it < config.keep_draws; ++it) {
    double a = 0.0;
    step(scale, a);
    chain.accept_stats(it) = a;
    chain.draws.row(it) = pt.q.transpose();
  }
  chain.step_size = scale;
  chain.mass_diag = Eigen::VectorXd::Ones(d);
  return chain;
}

std::vector<Chain> run_chains(SamplerKind kind, const LogDensity &target,
                              const SamplerConfig &config, const RandomStream &rng) {
  std::vector<Chain> chains;
  chains.reserve(static_cast<std::size_t>(config.chains));
  for (int c = 0; c < config.chains; ++c) {
    RandomStream chain_rng = rng.substream(static_cast<std::uint64_t>(c));
    chains.push_back(kind == SamplerKind::Hmc ? hmc_chain(target, config, chain_rng)
                                              : rwm_chain(target, config, chain_rng));
  }
  return chains;
}

Eigen::MatrixXd pool_draws(const std::vector<Chain> &chains) {
  if (chains.empty()) return {};
  Eigen::Index rows = 0;
  for (const auto &c : chains) rows += c.draws.rows();
  Eigen::MatrixXd out(rows, chains.front().draws.cols());
  Eigen::Index r = 0;
  for (const auto &c : chains) {
    out.middleRows(r, c.draws.rows()) = c.draws;
    r += c.draws.rows();
  }
  return out;
}

std::vector<Eigen::Index> thin_indices(Eigen::Index total, Eigen::Index target_count) {
  if (target_count < 1) throw Error("thin: target count must be positive");
  if (target_count > total)
    throw Error("thin: requested " + std::to_string(target_count) + " draws but only " +
                std::to_string(total) + " are available");
  const Eigen::Index stride = total / target_count;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(target_count));
  for (Eigen::Index s = 0; s < target_count; ++s) idx[static_cast<std::size_t>(s)] = (s + 1) * stride - 1;
  return idx;
}

Eigen::MatrixXd thin(const Eigen::MatrixXd &draws, Eigen::Index target_count) {
  const auto idx = thin_indices(draws.rows(), target_count);
  Eigen::MatrixXd out(target_count, draws.cols());
  for (std::size_t s = 0; s < idx.size(); ++s) out.row(static_cast<Eigen::Index>(s)) = draws.row(idx[s]);
  return out;
}

void write_chain_csv(std::ostream &out, const std::vector<Chain> &chains,
                     const std::vector<std::string> &names) {
  out << "chain,draw";
  for (const auto &n : names) out << ',' << n;
  out << ",accept,divergent\n";
  char buf[32];
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const Chain &ch = chains[c];
    for (Eigen::Index i = 0; i < ch.draws.rows(); ++i) {
      out << c << ',' << i;
      for (Eigen::Index k = 0; k < ch.draws.cols(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", ch.draws(i, k));
        out << ',' << buf;
      }
      std::snprintf(buf, sizeof buf, "%.17g", ch.accept_stats(i));
      out << ',' << buf << ',' << (ch.divergent[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
    }
  }
}

} // namespace sbc
