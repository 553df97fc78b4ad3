#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "sbc/experiment.hpp"

namespace sbc {

struct RunOptions {
  bool resume = false;
  std::optional<int> stop_after; ///< compute at most this many new iterations
  std::ostream *log = nullptr;   ///< one line per finished iteration
};

/// Runs a campaign and writes its artifacts. Returns 0 when every quantity
/// passes (or the run is incomplete), 1 when any quantity fails. Invalid
/// configurations throw ConfigError.
int run_experiment(const ExperimentConfig &config, const RunOptions &options = {});

/// One JSON Lines record of iterations.jsonl.
nlohmann::ordered_json iteration_record(const IterationResult &r, const std::string &config_hash);
/// Without a model, theta_prime carries names and constrained values only.
IterationResult parse_iteration_record(const nlohmann::ordered_json &j, const Model *model = nullptr);

/// `iter,quantity,rank,S,status`; failed iterations get an empty rank.
void write_ranks_csv(const std::filesystem::path &path, const std::vector<IterationResult> &results,
                     const std::vector<std::string> &quantities, int S);

/// Re-renders `<quantity>.svg` for every quantity of a completed run.
void plot_run(const std::filesystem::path &run_dir);

struct ReportOutcome {
  int exit_code = 0;
  nlohmann::ordered_json report;
  std::string text;
};

/// Writes report.json and report.txt for a completed or partial run. Throws
/// ConfigError when the directory holds no run.
ReportOutcome report_run(const std::filesystem::path &run_dir);

} // namespace sbc
