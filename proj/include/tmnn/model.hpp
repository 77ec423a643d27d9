#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmnn/backend.hpp"
#include "tmnn/dsp.hpp"
#include "tmnn/frontend_mel.hpp"
#include "tmnn/frontend_tm.hpp"
#include "tmnn/serialize.hpp"

namespace tmnn {

/// `mel` is a fixed (non-learnable) Mel filterbank with a single harmonic;
/// `harmonic` is the learnable triangular filterbank with H harmonics.
enum class FrontEndKind { kMel, kHarmonic };

std::string to_string(FrontEndKind kind);
FrontEndKind parse_front_end(const std::string& text);

struct ModelConfig {
  FrontEndKind front_end = FrontEndKind::kHarmonic;
  std::size_t n_filters = 128;
  std::size_t n_harmonics = 1;
  std::size_t n_mod_filters = 1;
  std::size_t n_classes = 50;
  std::size_t base_width = 32;

  std::size_t channels() const { return count_output_channels(n_harmonics, n_mod_filters); }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Spectrogram -> filterbank energies -> temporal modulation planes.
template <typename T>
class FrontEnd {
 public:
  FrontEnd() = default;
  explicit FrontEnd(const ModelConfig& config);

  std::size_t out_channels() const { return count_output_channels(filterbank.n_harmonics(), modulation.n_filters()); }

  MelSpec<T> energies(Graph<T>& g, const Spectrogram& spec) const { return filterbank.apply(g, spec); }
  ModulationTensor<T> extract(Graph<T>& g, const Spectrogram& spec) const;

  /// [B x C x F x T] for equally long spectrograms. Filter responses and
  /// kernels are built once per call and shared by the batch.
  Tensor<T> forward(Graph<T>& g, std::span<const Spectrogram> batch) const;

  std::vector<NamedTensor<T>> parameters() const;

  TriangularFilterbank<T> filterbank;
  SincModFilterbank<T> modulation;
};

template <typename T>
class TmnnModel {
 public:
  TmnnModel() = default;
  TmnnModel(const ModelConfig& config, std::uint64_t seed);

  Tensor<T> forward(Graph<T>& g, std::span<const Spectrogram> batch, bool training);

  const ModelConfig& config() const { return config_; }

  /// Every parameter tensor, learnable or not, with stable names.
  std::vector<NamedTensor<T>> parameters() const;
  /// Only the tensors an optimizer should update.
  std::vector<Tensor<T>> trainable() const;

  /// Parameters, batch-norm statistics and the config echo in one container.
  TensorFile to_file() const;
  void load_state(const TensorFile& file);
  static TmnnModel from_file(const TensorFile& file);

  FrontEnd<T> frontend;
  ResNetBackend<T> backend;

 private:
  ModelConfig config_;
};

extern template class FrontEnd<float>;
extern template class FrontEnd<double>;
extern template class TmnnModel<float>;
extern template class TmnnModel<double>;

}  // namespace tmnn
