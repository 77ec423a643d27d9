#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tmnn/dsp.hpp"
#include "tmnn/tensor.hpp"

namespace tmnn {

struct FilterbankConfig {
  double f_min = 40.0;
  double f_max = 8000.0;
  std::size_t n_bins = kBins;
  double bin_hz = kSampleRate / static_cast<double>(kFftSize);  // 31.25 Hz
};

/// Compressed channel energies, [harmonics x filters x frames].
template <typename T>
struct MelSpec {
  Tensor<T> energies;
  double frame_rate = kSampleRate / static_cast<double>(kHop);

  std::size_t harmonics() const { return energies.size(0); }
  std::size_t filters() const { return energies.size(1); }
  std::size_t frames() const { return energies.size(2); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Mel-like triangular filterbank with learnable centers and bandwidths.
///
/// Filter f has one fundamental center c_f and half-width b_f shared by all
/// harmonics; harmonic h (0-based) places its triangle at (h + 1) * c_f.
/// Parameters are unconstrained and mapped as
///   c = f_min + (f_max - f_min) * sigmoid(raw_center)
///   b = softplus(raw_bandwidth) + 1 Hz
/// so every optimizer step keeps centers inside [f_min, f_max] and
/// bandwidths positive.
template <typename T>
class TriangularFilterbank {
 public:
  static constexpr double kBandwidthFloorHz = 1.0;

  TriangularFilterbank() = default;

  /// Centers mel-spaced over [f_min, f_max / H]; each half-width is half the
  /// distance between the two neighbouring mel points.
  static TriangularFilterbank init(std::size_t n_filters, std::size_t n_harmonics, FilterbankConfig config = {});

  /// Builds raw parameters that map exactly onto the given centers/bandwidths.
  static TriangularFilterbank from_hz(const std::vector<double>& centers_hz, const std::vector<double>& bandwidths_hz,
                                      std::size_t n_harmonics, FilterbankConfig config = {});

  std::size_t n_filters() const { return raw_centers.numel(); }
  std::size_t n_harmonics() const { return harmonics_; }
  const FilterbankConfig& config() const { return config_; }

  Tensor<T> centers_hz(Graph<T>& g) const;
  Tensor<T> bandwidths_hz(Graph<T>& g) const;

  /// [H x F x n_bins] triangle responses over bin frequencies b * bin_hz.
  Tensor<T> filter_matrix(Graph<T>& g) const;

  /// energies[h, f, t] = ln(1 + sum_b M[h, f, b] * power[t, b]).
  MelSpec<T> apply(Graph<T>& g, const Spectrogram& spec) const;
  /// Same, with the spectrogram already transposed to [n_bins x T].
  MelSpec<T> apply_transposed(Graph<T>& g, const Tensor<T>& power_bins_by_frames, double frame_rate) const;

  void set_learnable(bool learnable);
  std::vector<NamedTensor<T>> parameters() const;

  Tensor<T> raw_centers;
  Tensor<T> raw_bandwidths;

 private:
  std::size_t harmonics_ = 1;
  FilterbankConfig config_;
};

/// [n_bins x T] copy of a spectrogram's power, in the requested precision.
template <typename T>
Tensor<T> transpose_power(const Spectrogram& spec);

/// Differentiable triangle responses: rows h * F + f, columns bins.
template <typename T>
Tensor<T> triangle_responses(Graph<T>& g, const Tensor<T>& centers_hz, const Tensor<T>& bandwidths_hz,
                             std::size_t n_harmonics, std::size_t n_bins, double bin_hz);

extern template class TriangularFilterbank<float>;
extern template class TriangularFilterbank<double>;

}  // namespace tmnn
