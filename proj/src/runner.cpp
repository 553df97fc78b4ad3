#include "sbc/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "sbc/svg.hpp"

namespace sbc {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char *kManifest = "manifest.json";
constexpr const char *kIterations = "iterations.jsonl";
constexpr const char *kRanks = "ranks.csv";
constexpr const char *kEnvelope = "envelope.json";
constexpr const char *kObserved = "observed_data.csv";

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const ordered_json &j, const char *key) {
  if (!j.contains(key) || !j.at(key).is_number()) return std::numeric_limits<double>::quiet_NaN();
  return j.at(key).get<double>();
}

void write_text_atomic(const fs::path &path, const std::string &text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return json::parse(in);
}

// Records with a matching config hash, last one per iteration wins. A torn
// trailing line from an interrupted run is skipped.
std::map<int, IterationResult> read_records(const fs::path &path, const std::string &hash,
                                            int iterations, const Model *model) {
  std::map<int, IterationResult> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const json::parse_error &) {
      continue;
    }
    if (j.value("config_hash", std::string{}) != hash) continue;
    IterationResult r = parse_iteration_record(j, model);
    if (r.iter >= 0 && r.iter < iterations) out[r.iter] = std::move(r);
  }
  return out;
}

struct RunData {
  json manifest;
  std::vector<std::string> quantities;
  int N = 0;
  int S = 0;
  std::vector<IterationResult> records;
  std::vector<int> missing;
};

RunData load_run(const fs::path &dir) {
  if (!fs::exists(dir / kManifest))
    throw ConfigError("no SBC run found in " + dir.string() + " (manifest.json is missing)");
  RunData d;
  d.manifest = read_json(dir / kManifest);
  d.quantities = d.manifest.at("quantities").get<std::vector<std::string>>();
  d.N = d.manifest.at("iterations").get<int>();
  d.S = d.manifest.at("ranks_S").get<int>();
  const auto recs =
      read_records(dir / kIterations, d.manifest.at("config_hash").get<std::string>(), d.N, nullptr);
  for (int i = 0; i < d.N; ++i) {
    const auto it = recs.find(i);
    if (it == recs.end())
      d.missing.push_back(i);
    else
      d.records.push_back(it->second);
  }
  return d;
}

Envelope envelope_for(const fs::path &dir, const RunData &d, int n) {
  const json &band = d.manifest.at("config").at("band");
  const double coverage = band.at("coverage").get<double>();
  BandOptions opt;
  opt.mc_replications = band.at("mc_replications").get<int>();
  opt.seed = band.at("seed").get<std::uint64_t>();
  if (!dir.empty() && fs::exists(dir / kEnvelope)) {
    Envelope env = read_envelope_json(dir / kEnvelope);
    if (env.N == n && env.S == d.S && env.coverage == coverage &&
        env.mc_replications == opt.mc_replications && env.seed == opt.seed)
      return env;
  }
  return simultaneous_band(n, d.S, coverage, opt);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

} // namespace

ordered_json iteration_record(const IterationResult &r, const std::string &config_hash) {
  ordered_json j;
  j["iter"] = r.iter;
  j["status"] = to_string(r.status);
  ordered_json ranks = ordered_json::object();
  for (const auto &[q, rank] : r.ranks) ranks[q] = rank;
  j["ranks"] = ranks;
  j["rhat_max"] = finite_or_null(r.rhat_max);
  j["ess_min"] = finite_or_null(r.ess_min);
  j["divergences"] = r.divergences;
  ordered_json theta = ordered_json::object();
  for (std::size_t k = 0; k < r.theta_prime.names.size(); ++k)
    theta[r.theta_prime.names[k]] = r.theta_prime.constrained(static_cast<Eigen::Index>(k));
  j["theta_prime"] = theta;
  j["seed_path"] = r.seed_path;
  j["wall_seconds"] = r.wall_seconds;
  if (r.status == IterationStatus::Failed) j["failure"] = r.failure;
  j["config_hash"] = config_hash;
  return j;
}

IterationResult parse_iteration_record(const ordered_json &j, const Model *model) {
  IterationResult r;
  r.iter = j.at("iter").get<int>();
  r.status = parse_status(j.at("status").get<std::string>());
  for (const auto &[q, v] : j.at("ranks").items()) r.ranks.emplace_back(q, v.get<int>());
  r.rhat_max = number_or_nan(j, "rhat_max");
  r.ess_min = number_or_nan(j, "ess_min");
  r.divergences = j.value("divergences", 0);
  if (j.contains("theta_prime")) {
    std::vector<double> values;
    for (const auto &[name, v] : j.at("theta_prime").items()) {
      r.theta_prime.names.push_back(name);
      values.push_back(v.get<double>());
    }
    Eigen::VectorXd c = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    if (model && c.size() == model->dim())
      r.theta_prime = model->param_vec(c);
    else
      r.theta_prime.constrained = c;
  }
  r.seed_path = j.value("seed_path", std::string{});
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.failure = j.value("failure", std::string{});
  return r;
}

void write_ranks_csv(const fs::path &path, const std::vector<IterationResult> &results,
                     const std::vector<std::string> &quantities, int S) {
  std::ostringstream out;
  out << "iter,quantity,rank,S,status\n";
  for (const auto &r : results)
    for (const auto &q : quantities) {
      out << r.iter << ',' << q << ',';
      if (r.status != IterationStatus::Failed) {
        const auto rank = r.rank(q);
        if (!rank) throw Error("iteration " + std::to_string(r.iter) + " has no rank for " + q);
        out << *rank;
      }
      out << ',' << S << ',' << to_string(r.status) << '\n';
    }
  write_text_atomic(path, out.str());
}

int run_experiment(const ExperimentConfig &config, const RunOptions &options) {
  const fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError("field 'output_dir': cannot create " + dir.string());
  {
    const fs::path probe = dir / ".write-probe";
    std::ofstream out(probe);
    if (!out) throw ConfigError("field 'output_dir': " + dir.string() + " is not writable");
    out.close();
    fs::remove(probe);
  }

  const std::string hash = config_hash(config);
  const auto model = make_model(config.model);
  const auto backend = make_backend(config.backend);
  const auto base_backend = make_backend(config.base_backend);
  const auto quantities = resolve_quantities(*model, config.sbc);
  const int N = config.sbc.iterations;
  const int S = config.sbc.ranks_S;

  std::map<int, IterationResult> done;
  if (options.resume) {
    if (fs::exists(dir / kManifest)) {
      const json old = read_json(dir / kManifest);
      if (old.value("config_hash", std::string{}) != hash)
        throw ConfigError("--resume: " + dir.string() + " holds a run of a different configuration (hash " +
                          old.value("config_hash", std::string{"?"}) + ", expected " + hash + ")");
    }
    done = read_records(dir / kIterations, hash, N, model.get());
  } else {
    for (const char *name : {kManifest, kIterations, kRanks, kEnvelope, kObserved, "report.json", "report.txt"})
      fs::remove(dir / name);
    for (const auto &q : quantities) fs::remove(dir / (q + ".svg"));
  }

  ordered_json manifest;
  manifest["config_hash"] = hash;
  manifest["seed"] = config.sbc.seed;
  manifest["mode"] = config.mode == SbcMode::Prior ? "prior" : "posterior";
  manifest["model"] = config.model.id;
  manifest["backend"] = config.backend.kind;
  manifest["iterations"] = N;
  manifest["ranks_S"] = S;
  manifest["quantities"] = quantities;
  manifest["status"] = "running";
  manifest["config"] = config.canonical;
  write_text_atomic(dir / kManifest, manifest.dump(2) + "\n");

  Dataset y_obs = model->empty_data();
  std::vector<Eigen::VectorXd> theta_primes;
  if (config.mode == SbcMode::Posterior) {
    y_obs = observed_data(config, *model);
    write_dataset_csv(dir / kObserved, y_obs);
    manifest["observed_data"] = kObserved;
    manifest["observed_rows"] = y_obs.size();
    BasePosterior base = base_posterior(*model, y_obs, *base_backend, config.sbc);
    ordered_json b;
    b["rows_used"] = base.data.size();
    if (base.has_diagnostics) {
      b["rhat_max"] = finite_or_null(base.rhat_max);
      b["ess_min"] = finite_or_null(base.ess_min);
      b["divergences"] = base.divergences;
    }
    b["warnings"] = base.warnings;
    manifest["base_posterior"] = b;
    if (options.log)
      for (const auto &w : base.warnings) *options.log << "warning: " << w << '\n';
    theta_primes = std::move(base.draws);
    y_obs = std::move(base.data);
  }

  std::vector<int> todo;
  for (int i = 0; i < N; ++i)
    if (!done.count(i)) todo.push_back(i);
  if (options.stop_after && static_cast<int>(todo.size()) > *options.stop_after)
    todo.resize(static_cast<std::size_t>(std::max(0, *options.stop_after)));

  {
    std::ofstream jsonl(dir / kIterations, std::ios::app);
    if (!jsonl) throw ConfigError("cannot append to " + (dir / kIterations).string());
    const auto body = [&](int i) {
      if (config.mode == SbcMode::Prior) return prior_sbc_iteration(*model, *backend, config.sbc, i);
      return posterior_sbc_iteration(*model, y_obs, theta_primes[static_cast<std::size_t>(i)], *backend,
                                     config.sbc, i);
    };
    const auto sink = [&](const IterationResult &r) {
      jsonl << iteration_record(r, hash).dump() << '\n';
      jsonl.flush();
      if (options.log) {
        *options.log << "iter " << r.iter << ' ' << to_string(r.status) << ' ' << fixed(r.wall_seconds, 2) << 's';
        if (r.status == IterationStatus::Failed) *options.log << ' ' << r.failure;
        *options.log << '\n';
        options.log->flush();
      }
    };
    for (auto &r : execute_iterations(todo, config.sbc.workers, body, sink)) done[r.iter] = std::move(r);
  }

  std::vector<IterationResult> all;
  std::string jsonl;
  for (const auto &[i, r] : done) {
    all.push_back(r);
    jsonl += iteration_record(r, hash).dump() + "\n";
  }
  write_text_atomic(dir / kIterations, jsonl);
  write_ranks_csv(dir / kRanks, all, quantities, S);

  const bool complete = static_cast<int>(all.size()) == N;
  manifest["status"] = complete ? "complete" : "incomplete";
  manifest["completed"] = all.size();
  write_text_atomic(dir / kManifest, manifest.dump(2) + "\n");

  if (complete) {
    const auto ens = assemble_ensemble(all, S, quantities);
    if (ens.size() > 0) {
      write_envelope_json(dir / kEnvelope,
                          simultaneous_band(static_cast<int>(ens.size()), S, config.band_coverage, config.band));
      if (config.plots) plot_run(dir);
    }
  }
  const ReportOutcome rep = report_run(dir);
  if (options.log) *options.log << rep.text;
  return rep.exit_code;
}

void plot_run(const fs::path &run_dir) {
  const RunData d = load_run(run_dir);
  if (!d.missing.empty())
    throw ConfigError("cannot plot " + run_dir.string() + ": run is incomplete (" +
                      std::to_string(d.missing.size()) + " iterations missing)");
  const auto ens = assemble_ensemble(d.records, d.S, d.quantities);
  if (ens.size() == 0) throw Error("cannot plot: every iteration failed");
  const Envelope env = envelope_for(run_dir, d, static_cast<int>(ens.size()));
  for (const auto &q : d.quantities)
    write_text_atomic(run_dir / (q + ".svg"), render_plot(pit_ecdf_diff(ens.ranks_of(q), d.S), env, q));
}

ReportOutcome report_run(const fs::path &run_dir) {
  if (!fs::is_directory(run_dir)) throw ConfigError("run directory " + run_dir.string() + " does not exist");
  const RunData d = load_run(run_dir);
  ReportOutcome out;
  ordered_json &rep = out.report;
  std::ostringstream txt;

  int failed = 0;
  int flagged = 0;
  double wall = 0.0;
  for (const auto &r : d.records) {
    failed += r.status == IterationStatus::Failed;
    flagged += r.status == IterationStatus::Flagged;
    wall += r.wall_seconds;
  }
  const bool complete = d.missing.empty();
  rep["status"] = complete ? "complete" : "incomplete";
  rep["mode"] = d.manifest.at("mode");
  rep["model"] = d.manifest.at("model");
  rep["backend"] = d.manifest.at("backend");
  rep["config_hash"] = d.manifest.at("config_hash");
  rep["iterations_planned"] = d.N;
  rep["iterations_completed"] = d.records.size();
  rep["missing_iterations"] = d.missing;
  rep["failed"] = failed;
  rep["diagnostics_flagged"] = flagged;
  rep["wall_seconds_total"] = wall;
  rep["wall_seconds_mean"] = d.records.empty() ? 0.0 : wall / static_cast<double>(d.records.size());
  if (d.manifest.contains("base_posterior")) rep["base_posterior"] = d.manifest.at("base_posterior");

  txt << "run: " << run_dir.string() << '\n'
      << "mode: " << d.manifest.at("mode").get<std::string>() << ", model: "
      << d.manifest.at("model").get<std::string>() << ", backend: "
      << d.manifest.at("backend").get<std::string>() << '\n'
      << "iterations: " << d.records.size() << " of " << d.N << " completed, " << failed << " failed, "
      << flagged << " diagnostics-flagged\n"
      << "wall clock: " << fixed(wall, 1) << " s total, " << fixed(rep["wall_seconds_mean"].get<double>(), 2)
      << " s per iteration\n";
  if (d.manifest.contains("base_posterior"))
    for (const auto &w : d.manifest.at("base_posterior").value("warnings", json::array()))
      txt << "base posterior warning: " << w.get<std::string>() << '\n';

  if (!complete) {
    std::string summary = "incomplete (" + std::to_string(d.records.size()) + "/" + std::to_string(d.N) +
                          " iterations)";
    rep["summary"] = summary;
    txt << "missing iterations:";
    for (int i : d.missing) txt << ' ' << i;
    txt << '\n' << summary << '\n';
    out.exit_code = 0;
  } else {
    const auto ens = assemble_ensemble(d.records, d.S, d.quantities);
    if (ens.size() == 0) {
      rep["summary"] = "FAIL (every iteration failed)";
      txt << "FAIL (every iteration failed)\n";
      out.exit_code = 1;
    } else {
      const Envelope env = envelope_for(run_dir, d, static_cast<int>(ens.size()));
      rep["band"] = {{"coverage", env.coverage}, {"N", env.N}, {"S", env.S}, {"gamma", env.gamma}};
      txt << "band: " << fixed(100 * env.coverage, 0) << "% simultaneous, N = " << env.N << ", S = " << env.S
          << '\n';
      int failing = 0;
      ordered_json qs = ordered_json::array();
      for (const auto &q : d.quantities) {
        const auto &ranks = ens.ranks_of(q);
        const BandVerdict v = band_check(pit_ecdf_diff(ranks, d.S), env);
        const Chi2Test chi = cook_chi2(interior_pit(ranks, d.S));
        ordered_json jq;
        jq["quantity"] = q;
        jq["verdict"] = v.pass ? "PASS" : "FAIL";
        jq["max_excursion"] = v.max_excursion;
        ordered_json exc = ordered_json::array();
        for (const auto &e : v.excursions)
          exc.push_back({{"u_begin", e.u_begin},
                         {"u_end", e.u_end},
                         {"direction", to_string(e.direction)},
                         {"region", to_string(e.region)},
                         {"max_magnitude", e.max_magnitude},
                         {"u_at_max", e.u_at_max},
                         {"u_centroid", e.u_centroid},
                         {"interpretation", interpret(e, q)}});
        jq["excursions"] = exc;
        jq["mean_rank_over_S"] =
            static_cast<double>(std::accumulate(ranks.begin(), ranks.end(), 0L)) / (ranks.size() * d.S);
        jq["chi2_statistic"] = chi.statistic;
        jq["chi2_p_value"] = chi.p_value;
        txt << q << ": " << (v.pass ? "PASS" : "FAIL");
        if (!v.pass) {
          ++failing;
          const Excursion &dom = v.dominant();
          jq["interpretation"] = interpret(dom, q);
          txt << ", " << interpret(dom, q) << " (max " << fixed(v.max_excursion, 4) << " beyond the band at u = "
              << fixed(dom.u_at_max, 3) << ")";
        }
        txt << "; chi-squared p = " << fixed(chi.p_value, 4) << '\n';
        qs.push_back(jq);
      }
      rep["quantities"] = qs;

      if (flagged > 0) {
        const RankEnsemble clean = ens.without_flagged();
        ordered_json sec;
        sec["N"] = clean.size();
        ordered_json verdicts = ordered_json::object();
        txt << "excluding diagnostics-flagged iterations (N = " << clean.size() << "):";
        if (clean.size() > 0) {
          const Envelope env2 = envelope_for({}, d, static_cast<int>(clean.size()));
          for (const auto &q : d.quantities) {
            const bool pass = band_check(pit_ecdf_diff(clean.ranks_of(q), d.S), env2).pass;
            verdicts[q] = pass ? "PASS" : "FAIL";
            txt << ' ' << q << ' ' << (pass ? "PASS" : "FAIL");
          }
        }
        txt << '\n';
        sec["verdicts"] = verdicts;
        rep["without_flagged"] = sec;
      }

      const int total = static_cast<int>(d.quantities.size());
      const std::string summary =
          failing == 0 ? "PASS (" + std::to_string(total) + "/" + std::to_string(total) + " quantities)"
                       : "FAIL (" + std::to_string(failing) + "/" + std::to_string(total) +
                             " quantities outside the band)";
      rep["summary"] = summary;
      txt << summary << '\n';
      out.exit_code = failing == 0 ? 0 : 1;
    }
  }
  out.text = txt.str();
  write_text_atomic(run_dir / "report.json", rep.dump(2) + "\n");
  write_text_atomic(run_dir / "report.txt", out.text);
  return out;
}

} // namespace sbc
