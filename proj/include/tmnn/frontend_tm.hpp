#pragma once

#include <cstddef>
#include <vector>

#include "tmnn/frontend_mel.hpp"
#include "tmnn/tensor.hpp"

namespace tmnn {

inline constexpr std::size_t kModKernelLength = 101;
inline constexpr double kFrameRate = kSampleRate / static_cast<double>(kHop);  // 62.5 frames/s

/// Symmetric Hamming window, 0.54 - 0.46 cos(2 pi n / (N - 1)).
std::vector<double> hamming_window(std::size_t length);

/// Windowed-sinc band-pass taps for the band [low_hz, high_hz] at an
/// envelope rate of `frame_rate`:
///   h[n] = (lp(high) - lp(low))[n] * hamming[n],
///   lp(f)[n] = (2 f / fr) * sinc(2 pi f (n - c) / fr), c = (length - 1) / 2.
std::vector<double> sinc_kernel(double low_hz, double high_hz, double frame_rate, std::size_t length = kModKernelLength);

/// Differentiable bank of sinc band-pass kernels, [M x length].
template <typename T>
Tensor<T> sinc_bandpass_bank(Graph<T>& g, const Tensor<T>& low_hz, const Tensor<T>& high_hz, double frame_rate,
                             std::size_t length = kModKernelLength);

/// Back-end input for one clip: [H * (M + 1) x F x T]. For each harmonic h,
/// plane h * (M + 1) holds the unmodulated energies and planes
/// h * (M + 1) + 1 + m the output of modulation filter m.
template <typename T>
struct ModulationTensor {
  Tensor<T> values;
  std::size_t n_harmonics = 1;
  std::size_t n_mod_filters = 0;
  double frame_rate = kFrameRate;
};

std::size_t count_output_channels(std::size_t n_harmonics, std::size_t n_mod_filters);

/// Learnable band edges for M temporal-modulation filters.
///
///   low  = (nyq - margin) * sigmoid(raw_low)
///   high = min(low + softplus(raw_band) + min_band, nyq)
/// which keeps 0 <= low < high <= nyq for any raw values.
template <typename T>
class SincModFilterbank {
 public:
  static constexpr double kLowMarginHz = 0.1;
  static constexpr double kMinBandHz = 0.1;

  SincModFilterbank() = default;

  /// M + 1 edges log-spaced over [0.5 Hz, nyq]; filter m spans edges m..m+1.
  static SincModFilterbank init(std::size_t n_filters, double frame_rate = kFrameRate);
  static SincModFilterbank from_edges(const std::vector<double>& low_hz, const std::vector<double>& high_hz,
                                      double frame_rate = kFrameRate);

  std::size_t n_filters() const { return raw_low.defined() ? raw_low.numel() : 0; }
  double frame_rate() const { return frame_rate_; }
  double nyquist() const { return frame_rate_ / 2.0; }

  Tensor<T> low_hz(Graph<T>& g) const;
  Tensor<T> high_hz(Graph<T>& g) const;
  Tensor<T> kernels(Graph<T>& g) const;

  /// S[f, m, t] = (y_f * h_m)[t] for every harmonic plane, with the
  /// unmodulated plane prepended per harmonic.
  ModulationTensor<T> modulate(Graph<T>& g, const MelSpec<T>& mel) const;

  std::vector<NamedTensor<T>> parameters() const;

  Tensor<T> raw_low;
  Tensor<T> raw_band;

 private:
  double frame_rate_ = kFrameRate;
};

/// Modulation with an explicit kernel bank [M x L] (odd L). M = 0 is given
/// by an undefined kernel tensor and returns the energies unchanged.
template <typename T>
ModulationTensor<T> modulate_with_kernels(Graph<T>& g, const MelSpec<T>& mel, const Tensor<T>& kernels);

/// Differentiable channel interleave of energies [H*F x T] and filtered
/// envelopes [H*F x M x T] into the ModulationTensor layout.
template <typename T>
Tensor<T> assemble_modulation(Graph<T>& g, const Tensor<T>& energies, const Tensor<T>& filtered,
                              std::size_t n_harmonics);

extern template class SincModFilterbank<float>;
extern template class SincModFilterbank<double>;

}  // namespace tmnn
