#include "sbc/uniformity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <tuple>

#include <json.hpp>

#include "sbc/error.hpp"
#include "sbc/random.hpp"
#include "sbc/stats.hpp"

namespace sbc {

namespace {

// Number of rank values r in {0..S} whose PIT (r+1)/(S+1) is <= k/K.
inline int ranks_at_or_below(int k, int K, int S) {
  return static_cast<int>((static_cast<long long>(k) * (S + 1)) / K);
}

// Per-grid-point ECDF counts of a rank histogram.
void ecdf_counts(const std::vector<int> &hist, int K, int S, std::vector<int> &out) {
  out.resize(static_cast<std::size_t>(K));
  int cum = 0;
  int r = 0;
  for (int k = 1; k <= K; ++k) {
    const int m = ranks_at_or_below(k, K, S);
    for (; r < m; ++r) cum += hist[static_cast<std::size_t>(r)];
    out[static_cast<std::size_t>(k - 1)] = cum;
  }
}

struct CdfTables {
  std::vector<std::vector<double>> cdf; // [k][c]
  CdfTables(int N, int S, int K) {
    for (int k = 1; k <= K; ++k) {
      const double p = static_cast<double>(ranks_at_or_below(k, K, S)) / (S + 1);
      cdf.push_back(stats::binomial_cdf_table(N, p));
    }
  }
  // smallest c with F(c) >= level
  int quantile(std::size_t k, double level) const {
    const auto &f = cdf[k];
    return static_cast<int>(std::lower_bound(f.begin(), f.end(), level) - f.begin());
  }
};

void fill_bounds(Envelope &env, const CdfTables &tables) {
  const auto K = static_cast<Eigen::Index>(tables.cdf.size());
  env.lower_count.resize(K);
  env.upper_count.resize(K);
  env.lower.resize(K);
  env.upper.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    env.lower_count(k) = std::min(tables.quantile(kk, 0.5 * env.gamma), env.N);
    env.upper_count(k) = std::min(tables.quantile(kk, 1.0 - 0.5 * env.gamma), env.N);
    env.lower(k) = static_cast<double>(env.lower_count(k)) / env.N - env.grid(k);
    env.upper(k) = static_cast<double>(env.upper_count(k)) / env.N - env.grid(k);
  }
}

bool inside(const Envelope &env, const std::vector<int> &counts) {
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (counts[k] < env.lower_count(kk) || counts[k] > env.upper_count(kk)) return false;
  }
  return true;
}

void simulate_hist(int N, int S, RandomStream &rng, std::vector<int> &hist) {
  hist.assign(static_cast<std::size_t>(S) + 1, 0);
  for (int i = 0; i < N; ++i) ++hist[rng.uniform_int(static_cast<std::uint64_t>(S) + 1)];
}

Eigen::VectorXd uniform_grid(int K) {
  Eigen::VectorXd g(K);
  for (int k = 1; k <= K; ++k) g(k - 1) = static_cast<double>(k) / K;
  return g;
}

std::mutex cache_mutex;
std::map<std::tuple<int, int, double, int, std::uint64_t>, Envelope> band_cache;

} // namespace

EcdfDiffCurve pit_ecdf_diff(std::span<const int> ranks, int S) {
  if (ranks.empty()) throw Error("pit_ecdf_diff: no ranks");
  if (S < 1) throw Error("pit_ecdf_diff: S must be positive");
  std::vector<int> hist(static_cast<std::size_t>(S) + 1, 0);
  for (int r : ranks) {
    if (r < 0 || r > S)
      throw Error("pit_ecdf_diff: rank " + std::to_string(r) + " outside [0, " + std::to_string(S) + "]");
    ++hist[static_cast<std::size_t>(r)];
  }
  const int N = static_cast<int>(ranks.size());
  const int K = band_grid_size(N, S);
  std::vector<int> counts;
  ecdf_counts(hist, K, S, counts);
  EcdfDiffCurve c;
  c.N = N;
  c.S = S;
  c.grid = uniform_grid(K);
  c.values.resize(K);
  for (int k = 0; k < K; ++k)
    c.values(k) = static_cast<double>(counts[static_cast<std::size_t>(k)]) / N - c.grid(k);
  c.values(K - 1) = 0.0;
  return c;
}

EcdfDiffCurve pit_ecdf_diff(std::span<const double> pit, std::span<const double> grid) {
  if (pit.empty() || grid.empty()) throw Error("pit_ecdf_diff: empty input");
  std::vector<double> sorted(pit.begin(), pit.end());
  std::sort(sorted.begin(), sorted.end());
  EcdfDiffCurve c;
  c.N = static_cast<int>(pit.size());
  c.grid.resize(static_cast<Eigen::Index>(grid.size()));
  c.values.resize(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (k > 0 && !(grid[k] > grid[k - 1])) throw Error("pit_ecdf_diff: grid must increase");
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), grid[k]) - sorted.begin();
    c.grid(static_cast<Eigen::Index>(k)) = grid[k];
    c.values(static_cast<Eigen::Index>(k)) = static_cast<double>(below) / c.N - grid[k];
  }
  if (grid.back() == 1.0) c.values(c.values.size() - 1) = 0.0;
  return c;
}

Envelope simultaneous_band(int N, int S, double coverage, BandOptions options) {
  if (N < 1 || S < 1) throw Error("simultaneous_band: N and S must be positive");
  if (!(coverage > 0.5 && coverage < 1.0)) throw Error("simultaneous_band: coverage must lie in (0.5, 1)");
  if (options.mc_replications < 1) throw Error("simultaneous_band: need at least one replication");
  const auto key = std::make_tuple(N, S, coverage, options.mc_replications, options.seed);
  {
    std::lock_guard lock(cache_mutex);
    if (auto it = band_cache.find(key); it != band_cache.end()) return it->second;
  }

  const int K = band_grid_size(N, S);
  const CdfTables tables(N, S, K);
  const int M = options.mc_replications;

  // For each simulated trajectory keep the smallest lower- and upper-tail
  // probabilities over the grid: it stays inside the band at level gamma iff
  // min F(c_k) >= gamma/2 and min P(X >= c_k) > gamma/2.
  std::vector<double> lower_tail(static_cast<std::size_t>(M));
  std::vector<double> upper_tail(static_cast<std::size_t>(M));
  std::vector<std::vector<int>> all_counts(static_cast<std::size_t>(M));
  RandomStream base = RandomStream::keyed(options.seed, {static_cast<std::uint64_t>(N),
                                                          static_cast<std::uint64_t>(S),
                                                          static_cast<std::uint64_t>(StreamRole::Band)});
  std::vector<int> hist;
  for (int m = 0; m < M; ++m) {
    RandomStream rng = base.substream(static_cast<std::uint64_t>(m));
    simulate_hist(N, S, rng, hist);
    auto &counts = all_counts[static_cast<std::size_t>(m)];
    ecdf_counts(hist, K, S, counts);
    double lo = 1.0;
    double hi = 1.0;
    for (int k = 0; k < K; ++k) {
      const auto &f = tables.cdf[static_cast<std::size_t>(k)];
      const int c = counts[static_cast<std::size_t>(k)];
      lo = std::min(lo, f[static_cast<std::size_t>(c)]);
      hi = std::min(hi, c > 0 ? 1.0 - f[static_cast<std::size_t>(c - 1)] : 1.0);
    }
    lower_tail[static_cast<std::size_t>(m)] = lo;
    upper_tail[static_cast<std::size_t>(m)] = hi;
  }
  const auto approx_coverage = [&](double gamma) {
    int in = 0;
    for (int m = 0; m < M; ++m)
      if (lower_tail[static_cast<std::size_t>(m)] >= 0.5 * gamma &&
          upper_tail[static_cast<std::size_t>(m)] > 0.5 * gamma)
        ++in;
    return static_cast<double>(in) / M;
  };

  // Largest gamma whose simultaneous coverage still reaches the target.
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (approx_coverage(mid) >= coverage)
      lo = mid;
    else
      hi = mid;
    if (std::abs(approx_coverage(lo) - coverage) <= 0.25 * options.tolerance && hi - lo < 1e-6) break;
  }

  Envelope env;
  env.N = N;
  env.S = S;
  env.coverage = coverage;
  env.gamma = lo;
  env.grid = uniform_grid(K);
  env.mc_replications = M;
  env.seed = options.seed;
  fill_bounds(env, tables);
  int in = 0;
  for (const auto &counts : all_counts) in += inside(env, counts) ? 1 : 0;
  env.achieved_coverage = static_cast<double>(in) / M;

  std::lock_guard lock(cache_mutex);
  band_cache.emplace(key, env);
  return env;
}

double band_null_coverage(const Envelope &envelope, int replications, std::uint64_t seed) {
  RandomStream base = RandomStream::keyed(seed, {static_cast<std::uint64_t>(envelope.N),
                                                 static_cast<std::uint64_t>(envelope.S),
                                                 static_cast<std::uint64_t>(StreamRole::Meta)});
  const int K = static_cast<int>(envelope.grid.size());
  std::vector<int> hist;
  std::vector<int> counts;
  int in = 0;
  for (int m = 0; m < replications; ++m) {
    RandomStream rng = base.substream(static_cast<std::uint64_t>(m));
    simulate_hist(envelope.N, envelope.S, rng, hist);
    ecdf_counts(hist, K, envelope.S, counts);
    in += inside(envelope, counts) ? 1 : 0;
  }
  return static_cast<double>(in) / replications;
}

const Excursion &BandVerdict::dominant() const {
  if (excursions.empty()) throw Error("verdict has no excursions");
  return *std::max_element(excursions.begin(), excursions.end(), [](const auto &a, const auto &b) {
    return a.max_magnitude < b.max_magnitude;
  });
}

BandVerdict band_check(const EcdfDiffCurve &curve, const Envelope &envelope) {
  if (curve.grid.size() != envelope.grid.size() || curve.N != envelope.N ||
      (curve.S != 0 && curve.S != envelope.S))
    throw Error("band_check: curve and envelope were built for different (N, S)");
  for (Eigen::Index k = 0; k < curve.grid.size(); ++k)
    if (std::abs(curve.grid(k) - envelope.grid(k)) > 1e-12) throw Error("band_check: grid mismatch");

  BandVerdict v;
  Excursion *open = nullptr;
  std::vector<double> weight, moment; // per excursion: sum of beyond, sum of u * beyond
  for (Eigen::Index k = 0; k < curve.grid.size(); ++k) {
    const double x = curve.values(k);
    double beyond = 0.0;
    Direction dir = Direction::Upward;
    if (x > envelope.upper(k)) {
      beyond = x - envelope.upper(k);
    } else if (x < envelope.lower(k)) {
      beyond = envelope.lower(k) - x;
      dir = Direction::Downward;
    }
    if (beyond <= 0.0) {
      open = nullptr;
      continue;
    }
    if (!open || open->direction != dir) {
      v.excursions.push_back({curve.grid(k), curve.grid(k), dir, 0.0, curve.grid(k), 0.0, Region::Left});
      open = &v.excursions.back();
      weight.push_back(0.0);
      moment.push_back(0.0);
    }
    open->u_end = curve.grid(k);
    weight.back() += beyond;
    moment.back() += beyond * curve.grid(k);
    if (beyond > open->max_magnitude) {
      open->max_magnitude = beyond;
      open->u_at_max = curve.grid(k);
    }
  }
  for (std::size_t i = 0; i < v.excursions.size(); ++i) {
    Excursion &e = v.excursions[i];
    e.u_centroid = moment[i] / weight[i];
    e.region = e.u_centroid <= 0.5 ? Region::Left : Region::Right;
    v.max_excursion = std::max(v.max_excursion, e.max_magnitude);
  }
  v.pass = v.excursions.empty();
  return v;
}

std::string to_string(Direction d) { return d == Direction::Upward ? "upward" : "downward"; }
std::string to_string(Region r) { return r == Region::Left ? "left" : "right"; }

std::string interpret(const Excursion &e, const std::string &quantity) {
  const std::string head = to_string(e.region) + "-region " + to_string(e.direction) + " excursion: ";
  if (e.direction == Direction::Downward)
    return head + (e.region == Region::Left
                       ? "inference tends to overestimate " + quantity
                       : "the right tail of the approximated posterior for " + quantity +
                             " tends to be thin");
  return head + (e.region == Region::Right
                     ? "inference tends to underestimate " + quantity
                     : "the left tail of the approximated posterior for " + quantity +
                           " tends to be thin");
}

Chi2Test cook_chi2(std::span<const double> pit_values) {
  if (pit_values.empty()) throw Error("cook_chi2: no values");
  double stat = 0.0;
  for (double u : pit_values) {
    if (!(u > 0.0 && u < 1.0))
      throw Error("cook_chi2: PIT values must lie strictly inside (0, 1); map ranks with "
                  "(rank + 0.5) / (S + 1)");
    const double z = stats::normal_quantile(u);
    stat += z * z;
  }
  return {stat, stats::chi2_upper_tail(stat, static_cast<double>(pit_values.size()))};
}

std::vector<double> interior_pit(std::span<const int> ranks, int S) {
  std::vector<double> out;
  out.reserve(ranks.size());
  for (int r : ranks) {
    if (r < 0 || r > S) throw Error("interior_pit: rank outside [0, S]");
    out.push_back((r + 0.5) / (S + 1.0));
  }
  return out;
}

void write_envelope_json(const std::filesystem::path &path, const Envelope &env) {
  nlohmann::ordered_json j;
  j["N"] = env.N;
  j["S"] = env.S;
  j["coverage"] = env.coverage;
  j["gamma"] = env.gamma;
  j["achieved_coverage"] = env.achieved_coverage;
  j["grid"] = std::vector<double>(env.grid.data(), env.grid.data() + env.grid.size());
  j["lower"] = std::vector<double>(env.lower.data(), env.lower.data() + env.lower.size());
  j["upper"] = std::vector<double>(env.upper.data(), env.upper.data() + env.upper.size());
  j["mc_replications"] = env.mc_replications;
  j["seed"] = env.seed;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Envelope read_envelope_json(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  const auto j = nlohmann::json::parse(in);
  Envelope env;
  env.N = j.at("N").get<int>();
  env.S = j.at("S").get<int>();
  env.coverage = j.at("coverage").get<double>();
  env.gamma = j.at("gamma").get<double>();
  env.achieved_coverage = j.value("achieved_coverage", 0.0);
  env.mc_replications = j.at("mc_replications").get<int>();
  env.seed = j.at("seed").get<std::uint64_t>();
  const auto grid = j.at("grid").get<std::vector<double>>();
  env.grid = Eigen::Map<const Eigen::VectorXd>(grid.data(), static_cast<Eigen::Index>(grid.size()));
  // Integer bounds are recomputed from gamma so verdicts match a fresh build.
  fill_bounds(env, CdfTables(env.N, env.S, static_cast<int>(grid.size())));
  return env;
}

} // namespace sbc
