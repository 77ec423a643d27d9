#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tmnn/config.hpp"
#include "tmnn/metrics.hpp"
#include "tmnn/training.hpp"

namespace tmnn {

/// git-describe string of the source tree the library was built from.
const char* version_string();

/// Writes config.txt, version.txt and seed.txt into the run directory.
void write_run_header(const RunConfig& config, const std::filesystem::path& dir);

struct RunResult {
  TrainState state;
  EvalReport report;   // test split, best-validation weights
  double train_seconds = 0.0;
};

/// Trains from scratch, reloads the best checkpoint and evaluates on `test`.
/// Everything lands in config.output_dir.
RunResult run_experiment(const RunConfig& config, const Dataset& train_set, const Dataset& val_set,
                         const Dataset& test_set, const std::vector<std::string>& class_names, bool verbose = false);

struct SweepRow {
  std::size_t n_mod_filters = 0;
  std::optional<double> macro_roc_auc;
  std::optional<double> macro_pr_auc;
  std::optional<double> accuracy;
  double train_seconds = 0.0;
};

/// One run per M with everything else (seed included) fixed. Run i goes to
/// output_dir/M<m>; the table goes to output_dir/sweep.csv.
std::vector<SweepRow> run_sweep(const RunConfig& base, const std::vector<std::size_t>& ms, const Dataset& train_set,
                                const Dataset& val_set, const Dataset& test_set,
                                const std::vector<std::string>& class_names, bool verbose = false);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace tmnn
