#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "her/config.hpp"
#include "her/trainer.hpp"

namespace her {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitRuntime = 3 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name: {"train", "--env", "bitflip", ...}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Runs one configured experiment and writes its artifacts under config.out_dir:
///   manifest.txt, metrics.csv, checkpoints/epoch_%04d, traces/worker_%02d.trace
TrainResult run_experiment(const ExperimentConfig& config, std::ostream& log);

/// Rows of a metrics.csv written by run_experiment; throws on a header mismatch.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

}  // namespace her
