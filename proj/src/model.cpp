#include "tmnn/model.hpp"

#include <stdexcept>

#include "tmnn/ops.hpp"

namespace tmnn {

std::string to_string(FrontEndKind kind) { return kind == FrontEndKind::kMel ? "mel" : "harmonic"; }

FrontEndKind parse_front_end(const std::string& text) {
  if (text == "mel") return FrontEndKind::kMel;
  if (text == "harmonic") return FrontEndKind::kHarmonic;
  throw std::invalid_argument("front_end must be 'mel' or 'harmonic', got '" + text + "'");
}

void ModelConfig::validate() const {
  if (n_filters == 0) throw std::invalid_argument("F must be at least 1");
  if (n_harmonics == 0) throw std::invalid_argument("H must be at least 1");
  if (front_end == FrontEndKind::kMel && n_harmonics != 1) throw std::invalid_argument("the mel front end has H = 1");
  if (n_classes == 0) throw std::invalid_argument("class count must be positive");
  if (base_width == 0) throw std::invalid_argument("base_width must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"front_end", to_string(front_end)}, {"F", n_filters},          {"H", n_harmonics},
          {"M", n_mod_filters},                {"n_classes", n_classes}, {"base_width", base_width}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.front_end = parse_front_end(j.at("front_end").get<std::string>());
  c.n_filters = j.at("F").get<std::size_t>();
  c.n_harmonics = j.at("H").get<std::size_t>();
  c.n_mod_filters = j.at("M").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.base_width = j.at("base_width").get<std::size_t>();
  c.validate();
  return c;
}

template <typename T>
FrontEnd<T>::FrontEnd(const ModelConfig& config)
    : filterbank(TriangularFilterbank<T>::init(config.n_filters, config.n_harmonics)),
      modulation(SincModFilterbank<T>::init(config.n_mod_filters)) {
  filterbank.set_learnable(config.front_end == FrontEndKind::kHarmonic);
}

template <typename T>
ModulationTensor<T> FrontEnd<T>::extract(Graph<T>& g, const Spectrogram& spec) const {
  return modulation.modulate(g, filterbank.apply(g, spec));
}

template <typename T>
Tensor<T> FrontEnd<T>::forward(Graph<T>& g, std::span<const Spectrogram> batch) const {
  if (batch.empty()) throw ShapeError("empty batch");
  const auto& cfg = filterbank.config();
  auto rows = triangle_responses(g, filterbank.centers_hz(g), filterbank.bandwidths_hz(g), filterbank.n_harmonics(),
                                 cfg.n_bins, cfg.bin_hz);
  auto kernels = modulation.kernels(g);
  std::vector<Tensor<T>> planes;
  planes.reserve(batch.size());
  for (const auto& spec : batch) {
    if (std::abs(spec.frame_rate - modulation.frame_rate()) > 1e-9) {
      throw std::invalid_argument("spectrogram frame rate does not match the modulation filterbank");
    }
    auto energy = ops::log1p(g, ops::matmul(g, rows, transpose_power<T>(spec)));
    MelSpec<T> mel{ops::reshape(g, energy, Shape{filterbank.n_harmonics(), filterbank.n_filters(), spec.frames()}),
                   spec.frame_rate};
    planes.push_back(modulate_with_kernels(g, mel, kernels).values);
  }
  return ops::stack<T>(g, planes);
}

template <typename T>
std::vector<NamedTensor<T>> FrontEnd<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (auto& p : filterbank.parameters()) out.push_back({"filterbank." + p.name, p.tensor});
  for (auto& p : modulation.parameters()) out.push_back({"modulation." + p.name, p.tensor});
  return out;
}

template <typename T>
TmnnModel<T>::TmnnModel(const ModelConfig& config, std::uint64_t seed)
    : frontend(config), backend(BackendConfig{config.channels(), config.n_classes, config.base_width}, seed),
      config_(config) {
  config.validate();
}

template <typename T>
Tensor<T> TmnnModel<T>::forward(Graph<T>& g, std::span<const Spectrogram> batch, bool training) {
  return backend.forward(g, frontend.forward(g, batch), training);
}

template <typename T>
std::vector<NamedTensor<T>> TmnnModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (auto& p : frontend.parameters()) out.push_back({"frontend." + p.name, p.tensor});
  for (auto& p : backend.parameters()) out.push_back({"backend." + p.name, p.tensor});
  return out;
}

template <typename T>
std::vector<Tensor<T>> TmnnModel<T>::trainable() const {
  std::vector<Tensor<T>> out;
  for (auto& p : parameters()) {
    if (p.tensor.requires_grad()) out.push_back(p.tensor);
  }
  return out;
}

template <typename T>
TensorFile TmnnModel<T>::to_file() const {
  TensorFile file;
  for (const auto& p : parameters()) file.put(p.name, p.tensor);
  for (const auto& [name, stats] : backend.norm_stats()) {
    if (!stats->initialized) continue;
    const std::size_t n = stats->running_mean.size();
    file.put("backend." + name + ".running_mean", Tensor<T>(Shape{n}, stats->running_mean));
    file.put("backend." + name + ".running_var", Tensor<T>(Shape{n}, stats->running_var));
  }
  file.meta()["model"] = config_.to_json();
  return file;
}

template <typename T>
void TmnnModel<T>::load_state(const TensorFile& file) {
  for (auto& p : parameters()) {
    if (!file.contains(p.name)) throw FormatError("checkpoint lacks tensor '" + p.name + "'");
    auto loaded = file.get<T>(p.name);
    if (loaded.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_string(loaded.shape()) +
                        ", model expects " + shape_string(p.tensor.shape()));
    }
    std::copy(loaded.data().begin(), loaded.data().end(), p.tensor.data().begin());
  }
  for (auto& [name, stats] : backend.norm_stats()) {
    const std::string key = "backend." + name + ".running_mean";
    if (!file.contains(key)) {
      stats->initialized = false;
      continue;
    }
    stats->running_mean = file.get<T>(key).values();
    stats->running_var = file.get<T>("backend." + name + ".running_var").values();
    stats->initialized = true;
  }
}

template <typename T>
TmnnModel<T> TmnnModel<T>::from_file(const TensorFile& file) {
  if (!file.meta().contains("model")) throw FormatError("checkpoint has no model config");
  TmnnModel model(ModelConfig::from_json(file.meta().at("model")), 0);
  model.load_state(file);
  return model;
}

template class FrontEnd<float>;
template class FrontEnd<double>;
template class TmnnModel<float>;
template class TmnnModel<double>;

}  // namespace tmnn
