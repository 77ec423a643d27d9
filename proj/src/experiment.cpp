#include "tmnn/experiment.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>

#ifndef TMNN_VERSION
#define TMNN_VERSION "unknown"
#endif

namespace tmnn {

const char* version_string() { return TMNN_VERSION; }

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_run_header(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.txt", config.to_text());
  write_text(dir / "version.txt", std::string(version_string()) + "\n");
  write_text(dir / "seed.txt", std::to_string(config.train.seed) + "\n");
}

RunResult run_experiment(const RunConfig& config, const Dataset& train_set, const Dataset& val_set,
                         const Dataset& test_set, const std::vector<std::string>& class_names, bool verbose) {
  config.validate();
  write_run_header(config, config.output_dir);
  TmnnModel<float> model(config.model, config.train.seed);
  TrainOptions options;
  options.output_dir = config.output_dir;
  options.verbose = verbose;
  RunResult result;
  const auto started = std::chrono::steady_clock::now();
  result.state = train(model, config.train, train_set, val_set, options);
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  model.load_state(TensorFile::load(result.state.best_checkpoint_path));
  result.report = evaluate(model, config.train, test_set, class_names);
  result.report.write_json(config.output_dir / "eval.json");
  result.report.write_per_tag_csv(config.output_dir / "per_tag.csv");
  return result;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::vector<std::size_t>& ms, const Dataset& train_set,
                                const Dataset& val_set, const Dataset& test_set,
                                const std::vector<std::string>& class_names, bool verbose) {
  std::vector<SweepRow> rows;
  for (std::size_t m : ms) {
    RunConfig cfg = base;
    cfg.model.n_mod_filters = m;
    cfg.output_dir = base.output_dir / ("M" + std::to_string(m));
    const auto result = run_experiment(cfg, train_set, val_set, test_set, class_names, verbose);
    rows.push_back({m, result.report.macro_roc_auc, result.report.macro_pr_auc, result.report.accuracy,
                    result.train_seconds});
    write_sweep_csv(base.output_dir / "sweep.csv", rows);
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "M,macro_roc_auc,macro_pr_auc,accuracy\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.n_mod_filters << ',';
    if (r.macro_roc_auc) out << *r.macro_roc_auc;
    out << ',';
    if (r.macro_pr_auc) out << *r.macro_pr_auc;
    out << ',';
    if (r.accuracy) out << *r.accuracy;
    out << '\n';
  }
}

}  // namespace tmnn
