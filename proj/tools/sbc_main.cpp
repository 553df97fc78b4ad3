// Command-line front end: run, plot, report, calibrate-band.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sbc/experiment.hpp"
#include "sbc/runner.hpp"
#include "sbc/uniformity.hpp"

namespace {

constexpr int kExitInvalid = 2;

int run_command(const std::string &config_path, std::optional<int> workers,
                std::optional<std::uint64_t> seed, bool resume, std::optional<int> stop_after) {
  sbc::ExperimentConfig config = sbc::load_experiment_config(config_path);
  if (workers) sbc::override_workers(config, *workers);
  if (seed) sbc::override_seed(config, *seed);
  sbc::RunOptions options;
  options.resume = resume;
  options.stop_after = stop_after;
  options.log = &std::cerr;
  return sbc::run_experiment(config, options);
}

int calibrate_command(int n, int s, double coverage, int replications, std::uint64_t seed,
                      const std::string &output) {
  sbc::BandOptions opt;
  opt.mc_replications = replications;
  opt.seed = seed;
  const sbc::Envelope env = sbc::simultaneous_band(n, s, coverage, opt);
  const std::string path = output.empty() ? "envelope.json" : output;
  sbc::write_envelope_json(path, env);
  std::cout << "gamma " << env.gamma << ", coverage on calibration ensembles " << env.achieved_coverage
            << ", written to " << path << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Simulation-based calibration checking"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<int> stop_after;
  bool resume = false;
  auto *run = app.add_subcommand("run", "Run a prior or posterior SBC campaign");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--workers", workers, "Worker threads (overrides the config)");
  run->add_option("--seed", seed, "Campaign seed (overrides the config)");
  run->add_flag("--resume", resume, "Keep finished iterations of a matching run");
  run->add_option("--stop-after", stop_after, "Stop after this many new iterations")->group("");

  std::string run_dir;
  auto *plot = app.add_subcommand("plot", "Render <quantity>.svg for a finished run");
  plot->add_option("--run-dir", run_dir, "Run directory")->required();
  auto *report = app.add_subcommand("report", "Write report.json and report.txt for a run");
  report->add_option("--run-dir", run_dir, "Run directory")->required();

  int n = 0;
  int s = 0;
  double coverage = 0.95;
  int replications = 5000;
  std::uint64_t band_seed = sbc::BandOptions{}.seed;
  std::string output;
  auto *calibrate = app.add_subcommand("calibrate-band", "Calibrate a simultaneous band and save it");
  calibrate->add_option("--n", n, "Number of ranks N")->required()->check(CLI::PositiveNumber);
  calibrate->add_option("--s", s, "Rank resolution S")->required()->check(CLI::PositiveNumber);
  calibrate->add_option("--coverage", coverage, "Simultaneous coverage")->required()->check(CLI::Range(0.5, 1.0));
  calibrate->add_option("--replications", replications, "Monte Carlo ensembles")->check(CLI::PositiveNumber);
  calibrate->add_option("--band-seed", band_seed, "Monte Carlo seed");
  calibrate->add_option("--output", output, "Envelope JSON path (default envelope.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*run) return run_command(config_path, workers, seed, resume, stop_after);
    if (*plot) {
      sbc::plot_run(run_dir);
      return 0;
    }
    if (*report) {
      const auto outcome = sbc::report_run(run_dir);
      std::cout << outcome.text;
      return outcome.exit_code;
    }
    if (*calibrate) return calibrate_command(n, s, coverage, replications, band_seed, output);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
