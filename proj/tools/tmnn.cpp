#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tmnn/config.hpp"
#include "tmnn/data_io.hpp"
#include "tmnn/experiment.hpp"
#include "tmnn/inspection.hpp"
#include "tmnn/model.hpp"
#include "tmnn/serialize.hpp"
#include "tmnn/synth.hpp"
#include "tmnn/training.hpp"

namespace fs = std::filesystem;
using namespace tmnn;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

std::string g_command_line;

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string manifest;
  std::int64_t seed = -1;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "override one key, e.g. --set M=2 (repeatable)");
  cmd->add_option("-o,--output-dir", args.output_dir, "run directory");
  cmd->add_option("-m,--manifest", args.manifest, "manifest CSV or Speech Commands root");
  cmd->add_option("--seed", args.seed, "random seed");
}

RunConfig build_config(const ConfigArgs& args) {
  RunConfig cfg;
  if (!args.config_file.empty()) cfg.apply_file(args.config_file);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (!args.manifest.empty()) cfg.manifest = args.manifest;
  if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
  return cfg;
}

void write_command(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "command.txt") << g_command_line << '\n';
}

struct LoadedData {
  LabeledSet set;
  fs::path base_dir;
};

LoadedData load_data(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (use --manifest or the manifest key)");
  LoadedData d;
  if (fs::is_directory(cfg.manifest)) {
    d.set = load_speech_commands(cfg.manifest);
    d.base_dir = cfg.manifest;
  } else {
    d.set = cfg.train.task == Task::kKeyword ? load_keyword_manifest(cfg.manifest)
                                             : load_mtat_manifest(cfg.manifest, cfg.top_k);
    d.base_dir = cfg.manifest.parent_path();
  }
  std::cerr << "clips: train " << select_split(d.set.clips, Split::kTrain).size() << ", val "
            << select_split(d.set.clips, Split::kVal).size() << ", test "
            << select_split(d.set.clips, Split::kTest).size() << " (" << d.set.dropped << " dropped)\n";
  return d;
}

Dataset split_dataset(const LoadedData& d, Split split) {
  return Dataset::from_clips(select_split(d.set.clips, split), d.set.vocab.size(), d.base_dir);
}

void write_vocab(const fs::path& path, const TagVocabulary& vocab) {
  std::ofstream out(path);
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.tags[i] << '\t' << vocab.counts[i] << '\n';
}

void fit_classes(RunConfig& cfg, const TagVocabulary& vocab) {
  if (cfg.model.n_classes != vocab.size()) {
    std::cerr << "n_classes set to " << vocab.size() << " to match the label vocabulary\n";
    cfg.model.n_classes = vocab.size();
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

TmnnModel<float> load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return TmnnModel<float>::from_file(TensorFile::load(path));
}

// --- prepare ---------------------------------------------------------------

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::string unquote(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::string wav_path(std::string mp3) {
  fs::path p(mp3);
  p.replace_extension(".wav");
  return p.generic_string();
}

// Reads a split list: one clip per line, either a bare path or
// tab-separated fields ending in the path.
std::set<std::string> read_split_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto fields = split_tabs(line);
    if (fields.empty()) continue;
    const auto last = unquote(fields.back());
    if (!last.empty()) out.insert(wav_path(last));
  }
  return out;
}

// The upstream annotation table is tab separated: clip_id, one 0/1 column
// per tag, mp3_path.
std::vector<ManifestRow> mtat_rows(const fs::path& annotations, const fs::path& split_dir) {
  std::ifstream in(annotations);
  if (!in) throw DataError("cannot read " + annotations.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(annotations.string() + ": empty file");
  auto header = split_tabs(line);
  for (auto& h : header) h = unquote(h);
  if (header.size() < 3 || header.back() != "mp3_path") {
    throw DataError(annotations.string() + ": expected a tab-separated table ending in mp3_path");
  }
  std::set<std::string> train_list, val_list, test_list;
  const bool lists = !split_dir.empty();
  if (lists) {
    train_list = read_split_list(split_dir / "train.tsv");
    val_list = read_split_list(split_dir / "valid.tsv");
    test_list = read_split_list(split_dir / "test.tsv");
  }
  std::vector<ManifestRow> rows;
  std::size_t line_no = 1, unlisted = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_tabs(line);
    if (fields.size() == 1 && unquote(fields[0]).empty()) continue;
    if (fields.size() != header.size()) {
      throw DataError(annotations.string() + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(header.size()));
    }
    ManifestRow row;
    row.path = wav_path(unquote(fields.back()));
    for (std::size_t c = 1; c + 1 < fields.size(); ++c) {
      if (unquote(fields[c]) == "1") row.tags.push_back(header[c]);
    }
    if (lists) {
      if (train_list.count(row.path)) row.split = Split::kTrain;
      else if (val_list.count(row.path)) row.split = Split::kVal;
      else if (test_list.count(row.path)) row.split = Split::kTest;
      else {
        ++unlisted;
        continue;
      }
    } else {
      // Directory split on the leading hex digit: 0-b train, c val, d-f test.
      const char d = row.path.empty() ? '0' : static_cast<char>(std::tolower(row.path[0]));
      row.split = d == 'c' ? Split::kVal : (d >= 'd' && d <= 'f' ? Split::kTest : Split::kTrain);
    }
    rows.push_back(std::move(row));
  }
  if (unlisted) std::cerr << unlisted << " clips not in any split list were left out\n";
  return rows;
}

int cmd_prepare(const std::string& mode, const std::string& source, const std::string& splits,
                const std::string& out_arg, std::uint64_t seed) {
  fs::path out = out_arg;
  if (mode == "mtat") {
    if (out.empty()) out = fs::path(source).parent_path() / "manifest.csv";
    const auto rows = mtat_rows(source, splits);
    write_manifest(out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out.string() << '\n';
    std::cout << "audio paths point at .wav files; convert the mp3s to 16 kHz mono WAV offline\n";
  } else if (mode == "speech-commands") {
    if (out.empty()) out = fs::path(source) / "manifest.csv";
    auto rows = speech_commands_rows(source);
    const fs::path base = fs::absolute(out).parent_path();
    for (auto& row : rows) row.path = fs::proximate(fs::absolute(fs::path(source) / row.path), base).generic_string();
    write_manifest(out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out.string() << '\n';
  } else if (mode == "synthetic") {
    if (out.empty()) throw ConfigError("synthetic mode needs --out DIR");
    SyntheticConfig sc;
    sc.seed = seed;
    const auto manifest = write_synthetic(out, sc);
    std::cout << "wrote " << sc.n_clips << " clips and " << manifest.string() << '\n';
  } else {
    throw ConfigError("unknown prepare mode '" + mode + "' (mtat, speech-commands or synthetic)");
  }
  return kOk;
}

// --- extract ---------------------------------------------------------------

int cmd_extract(const ConfigArgs& args, const std::string& checkpoint, const std::string& split_name,
                unsigned jobs) {
  RunConfig cfg = build_config(args);
  cfg.validate();
  const auto data = load_data(cfg);
  fit_classes(cfg, data.set.vocab);
  cfg.validate();

  TmnnModel<float> model =
      checkpoint.empty() ? TmnnModel<float>(cfg.model, cfg.train.seed) : load_checkpoint(checkpoint);
  if (!checkpoint.empty() && model.config().channels() != cfg.model.channels()) {
    throw DataError("checkpoint has " + std::to_string(model.config().channels()) + " channels, config expects " +
                    std::to_string(cfg.model.channels()));
  }
  // The hash covers everything that changes the features.
  std::string key = model.config().to_json().dump();
  for (const auto& p : model.frontend.parameters()) {
    key += p.name;
    const auto v = p.tensor.data();
    key.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  const std::string hash = hex(fnv1a(key));
  const char* env = std::getenv("TMNN_CACHE_DIR");
  const fs::path cache = (env && *env ? fs::path(env) : cfg.output_dir / "features") / hash;
  fs::create_directories(cache);
  write_command(cache);
  std::ofstream(cache / "config.txt") << cfg.to_text();

  std::vector<TaggedClip> clips = data.set.clips;
  if (!split_name.empty()) clips = select_split(clips, parse_split(split_name));

  struct Result {
    std::string feature;
    std::string shape;
    bool ok = false;
    bool cached = false;
  };
  std::vector<Result> results(clips.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < clips.size();) {
      const auto& clip = clips[i];
      auto& r = results[i];
      r.feature = hex(fnv1a(clip.path)) + ".modf";
      const fs::path target = cache / r.feature;
      try {
        if (fs::exists(target)) {
          const auto f = TensorFile::load(target);
          const auto shape = f.get<float>("values").shape();
          r.shape = std::to_string(shape[0]) + "x" + std::to_string(shape[1]) + "x" + std::to_string(shape[2]);
          r.ok = r.cached = true;
          continue;
        }
        const fs::path p(clip.path);
        const auto audio = load_audio_16k(p.is_absolute() ? p : data.base_dir / p);
        Graph<float> g(false);
        const auto mt = model.frontend.extract(g, stft_power(audio));
        TensorFile f;
        f.put("values", mt.values);
        f.meta() = {{"clip", clip.path},
                    {"n_harmonics", mt.n_harmonics},
                    {"n_mod_filters", mt.n_mod_filters},
                    {"frame_rate", mt.frame_rate},
                    {"config_hash", hash}};
        f.save(target);
        const auto& shape = mt.values.shape();
        r.shape = std::to_string(shape[0]) + "x" + std::to_string(shape[1]) + "x" + std::to_string(shape[2]);
        r.ok = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        std::cerr << "skipped " << clip.path << ": " << e.what() << '\n';
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(clips.size(), 1))));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ofstream index(cache / "index.csv");
  index << "path,split,feature,shape\n";
  std::size_t written = 0, hits = 0, failed = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (!results[i].ok) {
      ++failed;
      continue;
    }
    (results[i].cached ? hits : written)++;
    index << clips[i].path << ',' << to_string(clips[i].split) << ',' << results[i].feature << ','
          << results[i].shape << '\n';
  }
  std::cout << "cache " << cache.string() << ": " << written << " extracted, " << hits << " cached, " << failed
            << " failed\n";
  return kOk;
}

// --- train / eval / sweep --------------------------------------------------

void print_report(const EvalReport& r) {
  std::cout << std::setprecision(6);
  if (r.accuracy) std::cout << "accuracy " << *r.accuracy << '\n';
  if (r.kind == ReportKind::kKeyword) return;
  if (r.macro_roc_auc) std::cout << "macro_roc_auc " << *r.macro_roc_auc << '\n';
  if (r.macro_pr_auc) std::cout << "macro_pr_auc " << *r.macro_pr_auc << '\n';
}

int cmd_train(const ConfigArgs& args, bool verbose) {
  RunConfig cfg = build_config(args);
  cfg.validate();
  const auto data = load_data(cfg);
  fit_classes(cfg, data.set.vocab);
  cfg.validate();
  write_command(cfg.output_dir);
  write_vocab(cfg.output_dir / "vocab.txt", data.set.vocab);
  const auto result = run_experiment(cfg, split_dataset(data, Split::kTrain), split_dataset(data, Split::kVal),
                                     split_dataset(data, Split::kTest), data.set.vocab.tags, verbose);
  std::cout << "best epoch " << result.state.best_epoch << ", val loss " << result.state.best_val_loss << '\n';
  print_report(result.report);
  return kOk;
}

int cmd_eval(const ConfigArgs& args, const std::string& checkpoint, const std::string& split_name,
             const std::string& out_arg) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  RunConfig cfg = build_config(args);
  auto model = load_checkpoint(checkpoint);
  const bool explicit_model = !args.config_file.empty() || !args.overrides.empty();
  if (explicit_model && model.config().channels() != cfg.model.channels()) {
    throw DataError("config/checkpoint mismatch: config gives " + std::to_string(cfg.model.channels()) +
                    " channels, checkpoint has " + std::to_string(model.config().channels()));
  }
  const auto file = TensorFile::load(checkpoint);
  if (file.meta().contains("train") && file.meta()["train"].contains("task") && args.overrides.empty() &&
      args.config_file.empty()) {
    cfg.train.task = parse_task(file.meta()["train"]["task"].get<std::string>());
    cfg.train.crop_seconds = file.meta()["train"]["crop_seconds"].get<double>();
  }
  const auto data = load_data(cfg);
  if (data.set.vocab.size() != model.config().n_classes) {
    throw DataError("checkpoint predicts " + std::to_string(model.config().n_classes) + " classes, manifest has " +
                    std::to_string(data.set.vocab.size()));
  }
  const fs::path out = out_arg.empty() ? fs::path(checkpoint).parent_path() : fs::path(out_arg);
  write_command(out);
  const auto report = evaluate(model, cfg.train, split_dataset(data, parse_split(split_name)), data.set.vocab.tags);
  report.write_json(out / ("eval_" + split_name + ".json"));
  report.write_per_tag_csv(out / ("per_tag_" + split_name + ".csv"));
  print_report(report);
  return kOk;
}

int cmd_sweep(const ConfigArgs& args, const std::vector<std::size_t>& ms, bool verbose) {
  RunConfig cfg = build_config(args);
  cfg.validate();
  const auto data = load_data(cfg);
  fit_classes(cfg, data.set.vocab);
  cfg.validate();
  write_run_header(cfg, cfg.output_dir);
  write_command(cfg.output_dir);
  write_vocab(cfg.output_dir / "vocab.txt", data.set.vocab);
  const auto rows = run_sweep(cfg, ms, split_dataset(data, Split::kTrain), split_dataset(data, Split::kVal),
                              split_dataset(data, Split::kTest), data.set.vocab.tags, verbose);
  std::cout << "wrote " << (cfg.output_dir / "sweep.csv").string() << " (" << rows.size() << " rows)\n";
  return kOk;
}

// --- inspect / filters -----------------------------------------------------

TmnnModel<float> model_for_inspection(const ConfigArgs& args, const std::string& checkpoint) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  RunConfig cfg = build_config(args);
  cfg.validate();
  return TmnnModel<float>(cfg.model, cfg.train.seed);
}

void dump_filters(const TmnnModel<float>& model, const fs::path& out) {
  fs::create_directories(out);
  write_filterbank_csv(out / "filterbank.csv", model.frontend.filterbank);
  if (model.frontend.modulation.n_filters() > 0) {
    write_modulation_filters_csv(out / "modulation_filters.csv", model.frontend.modulation);
  }
}

int cmd_inspect(const ConfigArgs& args, const std::string& checkpoint, const std::string& clip_path,
                const std::string& out) {
  const auto model = model_for_inspection(args, checkpoint);
  write_command(out);
  dump_filters(model, out);
  if (!clip_path.empty()) {
    const auto clip = load_audio_16k(clip_path);
    Graph<float> g(false);
    const auto spectrum = modulation_spectrum(model.frontend.energies(g, stft_power(clip)));
    write_modulation_spectrum_csv(fs::path(out) / (fs::path(clip_path).stem().string() + "_modspec.csv"), spectrum);
  }
  std::cout << "wrote inspection CSVs to " << out << '\n';
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Learnable harmonic filterbank and temporal modulation front end"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  std::string prep_mode, prep_source, prep_splits, prep_out;
  std::uint64_t prep_seed = 0;
  auto* prepare = app.add_subcommand("prepare", "write a manifest (mtat, speech-commands) or a synthetic dataset");
  prepare->add_option("mode", prep_mode, "mtat | speech-commands | synthetic")->required();
  prepare->add_option("--source", prep_source, "annotation table (mtat) or dataset root (speech-commands)");
  prepare->add_option("--splits", prep_splits, "directory with train.tsv, valid.tsv, test.tsv (mtat)");
  prepare->add_option("--out", prep_out, "output manifest (or directory for synthetic)");
  prepare->add_option("--seed", prep_seed, "seed for synthetic data");

  ConfigArgs extract_args, train_args, eval_args, inspect_args, sweep_args, dump_args;
  std::string extract_ckpt, extract_split;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* extract = app.add_subcommand("extract", "compute and cache front-end features for every clip");
  add_config_options(extract, extract_args);
  extract->add_option("--checkpoint", extract_ckpt, "use a trained front end");
  extract->add_option("--split", extract_split, "only this split");
  extract->add_option("-j,--jobs", jobs, "worker threads");

  bool verbose = false;
  auto* train = app.add_subcommand("train", "train, keep the best-validation checkpoint, evaluate on test");
  add_config_options(train, train_args);
  train->add_flag("-v,--verbose", verbose, "print one line per epoch");

  std::string eval_ckpt, eval_split = "test", eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config_options(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "train | val | test");
  eval->add_option("--out", eval_out, "report directory (default: next to the checkpoint)");

  std::string inspect_ckpt, inspect_clip, inspect_out = "inspect";
  auto* inspect = app.add_subcommand("inspect", "dump filter CSVs and a clip's modulation spectrum");
  add_config_options(inspect, inspect_args);
  inspect->add_option("--checkpoint", inspect_ckpt, "checkpoint file (default: freshly initialized model)");
  inspect->add_option("--clip", inspect_clip, "16 kHz WAV for the modulation spectrum");
  inspect->add_option("--out", inspect_out, "output directory");

  std::vector<std::size_t> ms = {0, 1, 2, 4, 8};
  auto* sweep = app.add_subcommand("sweep", "train once per modulation filter count M");
  add_config_options(sweep, sweep_args);
  sweep->add_option("--ms", ms, "comma-separated M values")->delimiter(',');
  sweep->add_flag("-v,--verbose", verbose, "print one line per epoch");

  std::string dump_ckpt, dump_out = "filters";
  auto* filters = app.add_subcommand("filters", "filter utilities");
  filters->require_subcommand(1);
  auto* dump = filters->add_subcommand("dump", "write filterbank and modulation filter CSVs");
  add_config_options(dump, dump_args);
  dump->add_option("--checkpoint", dump_ckpt, "checkpoint file");
  dump->add_option("--out", dump_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*prepare) return cmd_prepare(prep_mode, prep_source, prep_splits, prep_out, prep_seed);
  if (*extract) return cmd_extract(extract_args, extract_ckpt, extract_split, jobs);
  if (*train) return cmd_train(train_args, verbose);
  if (*eval) return cmd_eval(eval_args, eval_ckpt, eval_split, eval_out);
  if (*inspect) return cmd_inspect(inspect_args, inspect_ckpt, inspect_clip, inspect_out);
  if (*sweep) return cmd_sweep(sweep_args, ms, verbose);
  if (*dump) {
    const auto model = model_for_inspection(dump_args, dump_ckpt);
    write_command(dump_out);
    dump_filters(model, dump_out);
    std::cout << "wrote filter CSVs to " << dump_out << '\n';
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch << ", batch " << e.batch << ", lr " << e.lr << ")\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const AudioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
