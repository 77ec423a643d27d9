#include "tmnn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace tmnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "front_end",    "H",          "M",          "F",         "base_width",       "n_classes",
      "task",         "crop_seconds", "batch_size", "max_epochs", "adam_lr",         "plateau_patience",
      "lr_decay",     "decays_before_sgd", "sgd_momentum", "seed", "output_dir",      "manifest",
      "top_k"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  try {
    if (key == "front_end") model.front_end = parse_front_end(v);
    else if (key == "H") model.n_harmonics = to_size(key, v);
    else if (key == "M") model.n_mod_filters = to_size(key, v);
    else if (key == "F") model.n_filters = to_size(key, v);
    else if (key == "base_width") model.base_width = to_size(key, v);
    else if (key == "n_classes") model.n_classes = to_size(key, v);
    else if (key == "task") train.task = parse_task(v);
    else if (key == "crop_seconds") train.crop_seconds = to_double(key, v);
    else if (key == "batch_size") train.batch_size = to_size(key, v);
    else if (key == "max_epochs") train.max_epochs = to_size(key, v);
    else if (key == "adam_lr") train.adam_lr = to_double(key, v);
    else if (key == "plateau_patience") train.plateau_patience = to_size(key, v);
    else if (key == "lr_decay") train.lr_decay = to_double(key, v);
    else if (key == "decays_before_sgd") train.decays_before_sgd = to_size(key, v);
    else if (key == "sgd_momentum") train.sgd_momentum = to_double(key, v);
    else if (key == "seed") train.seed = to_u64(key, v);
    else if (key == "output_dir") output_dir = v;
    else if (key == "manifest") manifest = v;
    else if (key == "top_k") top_k = to_size(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string RunConfig::get(const std::string& key) const {
  if (key == "front_end") return to_string(model.front_end);
  if (key == "H") return std::to_string(model.n_harmonics);
  if (key == "M") return std::to_string(model.n_mod_filters);
  if (key == "F") return std::to_string(model.n_filters);
  if (key == "base_width") return std::to_string(model.base_width);
  if (key == "n_classes") return std::to_string(model.n_classes);
  if (key == "task") return to_string(train.task);
  if (key == "crop_seconds") return fmt(train.crop_seconds);
  if (key == "batch_size") return std::to_string(train.batch_size);
  if (key == "max_epochs") return std::to_string(train.max_epochs);
  if (key == "adam_lr") return fmt(train.adam_lr);
  if (key == "plateau_patience") return std::to_string(train.plateau_patience);
  if (key == "lr_decay") return fmt(train.lr_decay);
  if (key == "decays_before_sgd") return std::to_string(train.decays_before_sgd);
  if (key == "sgd_momentum") return fmt(train.sgd_momentum);
  if (key == "seed") return std::to_string(train.seed);
  if (key == "output_dir") return output_dir.string();
  if (key == "manifest") return manifest.string();
  if (key == "top_k") return std::to_string(top_k);
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(text.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& key : keys()) out << key << " = " << get(key) << '\n';
  return out.str();
}

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (top_k == 0) throw ConfigError("top_k must be positive");
}

}  // namespace tmnn
