// Acceptance harness: prints one PASS/FAIL line per criterion and exits 1
// when any criterion fails. Campaign outputs go to ./acceptance_runs and are
// resumed on later invocations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sbc/backend.hpp"
#include "sbc/experiment.hpp"
#include "sbc/lotka_volterra.hpp"
#include "sbc/models.hpp"
#include "sbc/runner.hpp"
#include "sbc/sampler.hpp"
#include "sbc/sbc_engine.hpp"
#include "sbc/uniformity.hpp"

namespace fs = std::filesystem;
using namespace sbc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double time_limit; ///< seconds; 0 for none
  std::function<Outcome()> check;
};

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kWork = fs::current_path() / "acceptance_runs";
const fs::path kConfigs = fs::path(SBC_SOURCE_DIR) / "configs";

// Runs (or resumes) a bundled campaign and returns its report.
nlohmann::ordered_json campaign(const std::string &name) {
  ExperimentConfig c = load_experiment_config(kConfigs / (name + ".json"));
  c.output_dir = kWork / name;
  RunOptions opt;
  opt.resume = fs::exists(c.output_dir / "manifest.json");
  run_experiment(c, opt);
  return report_run(c.output_dir).report;
}

const nlohmann::ordered_json &quantity(const nlohmann::ordered_json &report, const std::string &q) {
  for (const auto &j : report.at("quantities"))
    if (j.at("quantity") == q) return j;
  throw Error("quantity " + q + " missing from report");
}

bool dominant_is(const nlohmann::ordered_json &qj, const std::string &region, const std::string &direction) {
  const auto &exc = qj.at("excursions");
  if (exc.empty()) return false;
  const nlohmann::ordered_json *best = &exc.front();
  for (const auto &e : exc)
    if (e.at("max_magnitude").get<double>() > best->at("max_magnitude").get<double>()) best = &e;
  return best->at("region") == region && best->at("direction") == direction;
}

std::string verdicts(const nlohmann::ordered_json &report) {
  std::string s;
  for (const auto &j : report.at("quantities")) {
    if (!s.empty()) s += ' ';
    s += j.at("quantity").get<std::string>() + "=" + j.at("verdict").get<std::string>();
    if (j.at("verdict") == "FAIL") {
      const auto &e = j.at("excursions");
      for (const auto &x : e)
        if (x.at("max_magnitude") == j.at("max_excursion")) {
          s += "(" + x.at("region").get<std::string>() + "-" + x.at("direction").get<std::string>() + ")";
          break;
        }
    }
  }
  return s;
}

// Smallest distance from the curve to either band edge; negative outside.
double band_margin(const std::vector<int> &ranks, int S, const Envelope &env) {
  const auto c = pit_ecdf_diff(ranks, S);
  double m = 1.0;
  for (Eigen::Index k = 0; k + 1 < c.values.size(); ++k)
    m = std::min({m, env.upper(k) - c.values(k), c.values(k) - env.lower(k)});
  return m;
}

// ---------------------------------------------------------------------------

Outcome null_calibration() {
  const ConjugateNormalModel model;
  const ConjugateExactBackend exact(100);
  const Envelope env = simultaneous_band(300, 100, 0.95);
  std::vector<std::string> names;
  std::vector<int> inside;
  for (int m = 0; m < 200; ++m) {
    SbcConfig c;
    c.iterations = 300;
    c.ranks_S = 100;
    c.seed = static_cast<std::uint64_t>(m + 1);
    const RankEnsemble ens = prior_sbc(model, exact, c);
    if (names.empty()) {
      names = ens.quantities;
      inside.assign(names.size(), 0);
    }
    for (std::size_t q = 0; q < names.size(); ++q)
      inside[q] += band_check(pit_ecdf_diff(ens.ranks_of(names[q]), 100), env).pass;
  }
  Outcome o{true, ""};
  for (std::size_t q = 0; q < names.size(); ++q) {
    const double cov = inside[q] / 200.0;
    o.pass = o.pass && cov >= 0.93;
    o.detail += names[q] + " inside " + std::to_string(inside[q]) + "/200 (" + fmt("%.3f", cov) + ") ";
  }
  o.detail += "need >= 0.93";
  return o;
}

Outcome empty_data_degeneracy() {
  const auto base = [](SbcMode mode, const std::string &dir) {
    nlohmann::json j{{"mode", mode == SbcMode::Prior ? "prior" : "posterior"},
                     {"model", {{"id", "conjugate-normal"}}},
                     {"backend", {{"kind", "exact"}, {"draws", 100}}},
                     {"sbc", {{"iterations", 300}, {"ranks_S", 100}}},
                     {"seed", 2024},
                     {"plots", false},
                     {"output_dir", (kWork / dir).string()}};
    if (mode == SbcMode::Posterior) j["data"] = {{"empty", true}};
    fs::remove_all(kWork / dir);
    run_experiment(parse_experiment_config(j));
    return slurp(kWork / dir / "ranks.csv");
  };
  const std::string prior = base(SbcMode::Prior, "degeneracy_prior");
  const std::string post = base(SbcMode::Posterior, "degeneracy_posterior");
  const bool same = !prior.empty() && prior == post;
  return {same, "ranks.csv " + std::string(same ? "byte-identical" : "differs") + " (" +
                    std::to_string(prior.size()) + " bytes)"};
}

Outcome bias_power() {
  const ConjugateNormalModel model;
  const ConjugateExactBackend shifted(100, 0.5);
  const Envelope env = simultaneous_band(300, 100, 0.95);
  int fail = 0, left_down = 0, left_up = 0;
  for (int rep = 0; rep < 100; ++rep) {
    SbcConfig c;
    c.iterations = 300;
    c.ranks_S = 100;
    c.seed = static_cast<std::uint64_t>(rep + 1);
    const auto v = band_check(pit_ecdf_diff(prior_sbc(model, shifted, c).ranks_of("theta"), 100), env);
    if (v.pass) continue;
    ++fail;
    const Excursion &d = v.dominant();
    left_down += d.region == Region::Left && d.direction == Direction::Downward;
    left_up += d.region == Region::Left && d.direction == Direction::Upward;
  }
  return {fail >= 95 && left_down >= 95,
          "theta FAIL in " + std::to_string(fail) + "/100; dominant left-downward " + std::to_string(left_down) +
              ", left-upward " + std::to_string(left_up) + " (need FAIL >= 95 with left-downward)"};
}

Outcome band_coverage() {
  Outcome o{true, ""};
  Envelope e250, e500;
  for (int N : {100, 250, 500}) {
    const Envelope env = simultaneous_band(N, 100, 0.95);
    // Independent check: fresh discrete-uniform ensembles from a separate generator.
    std::mt19937_64 gen(777 + static_cast<std::uint64_t>(N));
    std::uniform_int_distribution<int> rank(0, 100);
    const Eigen::Index K = env.grid.size();
    std::vector<int> counts(101);
    int inside = 0;
    for (int m = 0; m < 10000; ++m) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int i = 0; i < N; ++i) ++counts[static_cast<std::size_t>(rank(gen))];
      bool ok = true;
      int cum = 0;
      long r = 0;
      for (Eigen::Index k = 0; k < K && ok; ++k) {
        const long limit = (static_cast<long>(k + 1) * 101) / K; // ranks r with r + 1 <= limit
        for (; r < limit; ++r) cum += counts[static_cast<std::size_t>(r)];
        ok = cum >= env.lower_count(k) && cum <= env.upper_count(k);
      }
      inside += ok;
    }
    const double cov = inside / 10000.0;
    o.pass = o.pass && cov >= 0.94 && cov <= 0.96;
    o.detail += "N=" + std::to_string(N) + " coverage " + fmt("%.4f", cov) + "; ";
    if (N == 250) e250 = env;
    if (N == 500) e500 = env;
  }
  bool shrinks = e250.grid.size() == e500.grid.size();
  for (Eigen::Index k = 0; shrinks && k + 1 < e250.grid.size(); ++k)
    shrinks = (e500.upper(k) - e500.lower(k)) < (e250.upper(k) - e250.lower(k));
  const Eigen::Index mid = e250.grid.size() / 2;
  o.pass = o.pass && shrinks;
  o.detail += "width at u=0.5: N=250 " + fmt("%.4f", e250.upper(mid) - e250.lower(mid)) + ", N=500 " +
              fmt("%.4f", e500.upper(mid) - e500.lower(mid)) + (shrinks ? " (shrinks everywhere)" : " (does not shrink)");
  return o;
}

Outcome funnel_pattern() {
  const auto centered = campaign("hierarchical_centered_weak_likelihood");
  const auto noncentered = campaign("hierarchical_noncentered_weak_likelihood");
  const auto &tau = quantity(centered, "tau");
  const bool tau_left_down = tau.at("verdict") == "FAIL" && dominant_is(tau, "left", "downward");
  bool nc_pass = true;
  for (const auto &q : noncentered.at("quantities")) nc_pass = nc_pass && q.at("verdict") == "PASS";
  return {tau_left_down && nc_pass, "centered: " + verdicts(centered) + "; non-centered: " + verdicts(noncentered) +
                                        " (need centered tau FAIL left-downward, non-centered all PASS)"};
}

Outcome mirror_regime() {
  const auto centered = campaign("hierarchical_centered_strong_likelihood");
  const auto noncentered = campaign("hierarchical_noncentered_strong_likelihood");
  bool c_pass = true;
  for (const auto &q : centered.at("quantities")) c_pass = c_pass && q.at("verdict") == "PASS";

  // Distance of mu0 and tau to the band in the non-centered run (reported only).
  const fs::path dir = kWork / "hierarchical_noncentered_strong_likelihood";
  std::vector<IterationResult> records;
  {
    std::ifstream in(dir / "iterations.jsonl");
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) records.push_back(parse_iteration_record(nlohmann::ordered_json::parse(line)));
  }
  const auto ens = assemble_ensemble(records, 100, {"mu0", "tau"});
  const Envelope env = read_envelope_json(dir / "envelope.json");
  std::string margins;
  if (static_cast<int>(ens.size()) == env.N)
    margins = ", margin to band mu0 " + fmt("%.4f", band_margin(ens.ranks_of("mu0"), 100, env)) + " tau " +
              fmt("%.4f", band_margin(ens.ranks_of("tau"), 100, env));
  return {c_pass, "centered: " + verdicts(centered) + "; non-centered (not gated): " + verdicts(noncentered) + margins};
}

Outcome ode_correctness() {
  const LvParams p{1.0, 0.05, 1.0, 0.05, 0.25, 0.25, 30.0, 5.0};
  std::vector<double> fine;
  for (int i = 0; i <= 2000; ++i) fine.push_back(i * 0.01);
  const auto traj = lv_solve(p, fine, 0.01);
  const double v0 = lv_invariant(traj.states.front(), p);
  double drift = 0.0;
  for (const auto &s : traj.states) drift = std::max(drift, std::abs(lv_invariant(s, p) - v0) / std::abs(v0));

  std::vector<double> years;
  for (int t = 0; t <= 20; ++t) years.push_back(t);
  const auto ref = lv_solve(p, years, 0.001);
  const auto err = [&](double h) {
    const auto tr = lv_solve(p, years, h);
    double e = 0.0;
    for (std::size_t k = 0; k < years.size(); ++k) e = std::max(e, (tr.states[k] - ref.states[k]).cwiseAbs().maxCoeff());
    return e;
  };
  const double ratio = err(0.02) / err(0.01);
  return {drift < 1e-6 && ratio >= 12.0 && ratio <= 20.0,
          "max relative invariant drift " + fmt("%.2e", drift) + " (need < 1e-6), step-halving ratio " +
              fmt("%.2f", ratio) + " (need 12..20)"};
}

Outcome lv_smoke() {
  const auto rep = campaign("lotka_volterra_posterior");
  const auto &ll = quantity(rep, kLoglikQuantity);
  return {rep.at("status") == "complete" && ll.at("verdict") == "PASS",
          "loglik " + ll.at("verdict").get<std::string>() + "; all: " + verdicts(rep) + "; " +
              fmt("%.1f", rep.at("wall_seconds_mean").get<double>()) + " s per iteration, " +
              std::to_string(rep.at("failed").get<int>()) + " failed, " +
              std::to_string(rep.at("diagnostics_flagged").get<int>()) + " flagged"};
}

Outcome diagnostics_sanity() {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto chains = [&](int n, double phi, double spread) {
    std::vector<Eigen::VectorXd> c(4, Eigen::VectorXd(n));
    for (int j = 0; j < 4; ++j) {
      double x = z(gen) / std::sqrt(1.0 - phi * phi);
      for (int i = 0; i < n; ++i) {
        x = phi * x + z(gen);
        c[static_cast<std::size_t>(j)](i) = x + spread * j;
      }
    }
    return c;
  };
  const double r_iid = split_rhat(chains(1000, 0.0, 0.0));
  const double r_sep = split_rhat(chains(1000, 0.0, 2.0));
  const double e_iid = ess_bulk(chains(1000, 0.0, 0.0));
  const double e_ar = ess_bulk(chains(5000, 0.9, 0.0));
  const double ar_exact = 20000.0 * (1 - 0.9) / (1 + 0.9);
  const bool ok = r_iid < 1.01 && r_sep > 1.5 && std::abs(e_iid - 4000) <= 800 && e_ar >= ar_exact / 1.5 &&
                  e_ar <= ar_exact * 1.5;
  return {ok, "R-hat iid " + fmt("%.4f", r_iid) + ", separated " + fmt("%.3f", r_sep) + "; ESS iid " +
                  fmt("%.0f", e_iid) + "/4000, AR(1) " + fmt("%.0f", e_ar) + " vs " + fmt("%.0f", ar_exact)};
}

Outcome determinism_resume() {
  const auto config = [](const std::string &dir) {
    nlohmann::json j{{"mode", "prior"},
                     {"model", {{"id", "conjugate-normal"}}},
                     {"backend",
                      {{"kind", "hmc"},
                       {"sampler", {{"chains", 2}, {"warmup_draws", 200}, {"keep_draws", 300}, {"target_accept", 0.9}}}}},
                     {"sbc", {{"iterations", 100}, {"ranks_S", 100}}},
                     {"seed", 5},
                     {"plots", false},
                     {"output_dir", (kWork / dir).string()}};
    fs::remove_all(kWork / dir);
    return parse_experiment_config(j);
  };
  std::vector<std::string> outputs;
  for (int w : {1, 4, 8}) {
    ExperimentConfig c = config("determinism_w" + std::to_string(w));
    override_workers(c, w);
    run_experiment(c);
    outputs.push_back(slurp(c.output_dir / "ranks.csv"));
  }
  ExperimentConfig c = config("determinism_resume");
  RunOptions first;
  first.stop_after = 37;
  run_experiment(c, first);
  RunOptions rest;
  rest.resume = true;
  run_experiment(c, rest);
  outputs.push_back(slurp(c.output_dir / "ranks.csv"));

  bool same = !outputs[0].empty();
  for (const auto &o : outputs) same = same && o == outputs[0];
  return {same, std::string("ranks.csv across workers 1/4/8 and interrupt-resume: ") +
                    (same ? "byte-identical" : "differ")};
}

} // namespace

int main() {
  fs::create_directories(kWork);
  const std::vector<Criterion> criteria{
      {1, "null calibration (oracle)", 120, null_calibration},
      {2, "empty-data posterior SBC equals prior SBC", 60, empty_data_degeneracy},
      {3, "bias detection power", 300, bias_power},
      {4, "band coverage calibration", 180, band_coverage},
      {5, "funnel pattern, weak likelihood", 0, funnel_pattern},
      {6, "mirror regime, strong likelihood", 0, mirror_regime},
      {7, "ODE correctness", 10, ode_correctness},
      {8, "Lotka-Volterra posterior SBC smoke", 0, lv_smoke},
      {9, "diagnostics sanity", 30, diagnostics_sanity},
      {10, "determinism and resume", 120, determinism_resume},
  };
  int failed = 0;
  for (const auto &c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception &e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit > 0 && secs > c.time_limit) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.time_limit) + " s limit";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail << " ["
              << fmt("%.1f", secs) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria pass" << std::endl;
  return failed == 0 ? 0 : 1;
}
