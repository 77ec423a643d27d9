#include "tmnn/frontend_mel.hpp"

#include <cmath>
#include <stdexcept>

#include "tmnn/ops.hpp"

namespace tmnn {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

}  // namespace

template <typename T>
TriangularFilterbank<T> TriangularFilterbank<T>::init(std::size_t n_filters, std::size_t n_harmonics,
                                                      FilterbankConfig config) {
  if (n_filters == 0) throw std::invalid_argument("filterbank needs at least one filter");
  if (n_harmonics == 0) throw std::invalid_argument("filterbank needs at least one harmonic");
  const double lo = hz_to_mel(config.f_min);
  const double hi = hz_to_mel(config.f_max / static_cast<double>(n_harmonics));
  std::vector<double> points(n_filters + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_filters + 1));
  }
  std::vector<double> centers(n_filters), bandwidths(n_filters);
  for (std::size_t f = 0; f < n_filters; ++f) {
    centers[f] = points[f + 1];
    bandwidths[f] = 0.5 * (points[f + 2] - points[f]);
  }
  return from_hz(centers, bandwidths, n_harmonics, config);
}

template <typename T>
TriangularFilterbank<T> TriangularFilterbank<T>::from_hz(const std::vector<double>& centers_hz,
                                                         const std::vector<double>& bandwidths_hz,
                                                         std::size_t n_harmonics, FilterbankConfig config) {
  if (centers_hz.empty() || centers_hz.size() != bandwidths_hz.size()) {
    throw std::invalid_argument("filterbank needs matching, nonempty center and bandwidth lists");
  }
  if (n_harmonics == 0) throw std::invalid_argument("filterbank needs at least one harmonic");
  TriangularFilterbank fb;
  fb.harmonics_ = n_harmonics;
  fb.config_ = config;
  const std::size_t n = centers_hz.size();
  std::vector<T> rc(n), rb(n);
  for (std::size_t f = 0; f < n; ++f) {
    const double c = centers_hz[f];
    const double b = bandwidths_hz[f];
    if (!(c > config.f_min && c < config.f_max)) throw std::invalid_argument("center outside (f_min, f_max)");
    if (!(b > kBandwidthFloorHz)) throw std::invalid_argument("bandwidth must exceed the 1 Hz floor");
    rc[f] = static_cast<T>(logit((c - config.f_min) / (config.f_max - config.f_min)));
    rb[f] = static_cast<T>(softplus_inverse(b - kBandwidthFloorHz));
  }
  fb.raw_centers = Tensor<T>(Shape{n}, std::move(rc));
  fb.raw_bandwidths = Tensor<T>(Shape{n}, std::move(rb));
  fb.set_learnable(true);
  return fb;
}

template <typename T>
Tensor<T> TriangularFilterbank<T>::centers_hz(Graph<T>& g) const {
  const T span = static_cast<T>(config_.f_max - config_.f_min);
  return ops::add_scalar(g, ops::scale(g, ops::sigmoid(g, raw_centers), span), static_cast<T>(config_.f_min));
}

template <typename T>
Tensor<T> TriangularFilterbank<T>::bandwidths_hz(Graph<T>& g) const {
  return ops::add_scalar(g, ops::softplus(g, raw_bandwidths), static_cast<T>(kBandwidthFloorHz));
}

template <typename T>
Tensor<T> triangle_responses(Graph<T>& g, const Tensor<T>& centers_hz, const Tensor<T>& bandwidths_hz,
                             std::size_t n_harmonics, std::size_t n_bins, double bin_hz) {
  const std::size_t n_filters = centers_hz.numel();
  if (bandwidths_hz.numel() != n_filters) throw ShapeError("center/bandwidth count mismatch");
  Tensor<T> out(Shape{n_harmonics * n_filters, n_bins});
  auto o = out.data();
  auto c = centers_hz.data();
  auto bw = bandwidths_hz.data();
  for (std::size_t h = 0; h < n_harmonics; ++h) {
    const T mult = static_cast<T>(h + 1);
    for (std::size_t f = 0; f < n_filters; ++f) {
      const T peak = mult * c[f];
      T* row = o.data() + (h * n_filters + f) * n_bins;
      for (std::size_t b = 0; b < n_bins; ++b) {
        const T dist = std::abs(static_cast<T>(static_cast<double>(b) * bin_hz) - peak);
        row[b] = dist < bw[f] ? T(1) - dist / bw[f] : T(0);
      }
    }
  }
  if (g.tracks({&centers_hz, &bandwidths_hz})) {
    g.record("triangle_responses", {centers_hz, bandwidths_hz}, out,
             [=]() mutable {
               auto go = out.grad();
               auto gc = centers_hz.requires_grad() ? centers_hz.ensure_grad() : std::span<T>{};
               auto gb = bandwidths_hz.requires_grad() ? bandwidths_hz.ensure_grad() : std::span<T>{};
               auto c = centers_hz.data();
               auto bw = bandwidths_hz.data();
               for (std::size_t h = 0; h < n_harmonics; ++h) {
                 const T mult = static_cast<T>(h + 1);
                 for (std::size_t f = 0; f < n_filters; ++f) {
                   const T peak = mult * c[f];
                   const T* grow = go.data() + (h * n_filters + f) * n_bins;
                   T dc = T(0), db = T(0);
                   for (std::size_t b = 0; b < n_bins; ++b) {
                     const T d = static_cast<T>(static_cast<double>(b) * bin_hz) - peak;
                     const T dist = std::abs(d);
                     if (dist >= bw[f] || grow[b] == T(0)) continue;
                     // w = 1 - |x - (h+1)c| / bw
                     const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                     dc += grow[b] * sign * mult / bw[f];
                     db += grow[b] * dist / (bw[f] * bw[f]);
                   }
                   if (!gc.empty()) gc[f] += dc;
                   if (!gb.empty()) gb[f] += db;
                 }
               }
             });
  }
  return out;
}

template <typename T>
Tensor<T> TriangularFilterbank<T>::filter_matrix(Graph<T>& g) const {
  auto rows = triangle_responses(g, centers_hz(g), bandwidths_hz(g), harmonics_, config_.n_bins, config_.bin_hz);
  return ops::reshape(g, rows, Shape{harmonics_, n_filters(), config_.n_bins});
}

template <typename T>
Tensor<T> transpose_power(const Spectrogram& spec) {
  const std::size_t frames = spec.frames(), bins = spec.bins();
  std::vector<T> values(frames * bins);
  auto p = spec.power.data();
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t b = 0; b < bins; ++b) values[b * frames + t] = static_cast<T>(p[t * bins + b]);
  return Tensor<T>(Shape{bins, frames}, std::move(values));
}

template <typename T>
MelSpec<T> TriangularFilterbank<T>::apply_transposed(Graph<T>& g, const Tensor<T>& power_bins_by_frames,
                                                     double frame_rate) const {
  if (power_bins_by_frames.rank() != 2 || power_bins_by_frames.size(0) != config_.n_bins) {
    throw ShapeError("filterbank expects " + std::to_string(config_.n_bins) + " frequency bins, got " +
                     shape_string(power_bins_by_frames.shape()));
  }
  const std::size_t frames = power_bins_by_frames.size(1);
  auto rows = triangle_responses(g, centers_hz(g), bandwidths_hz(g), harmonics_, config_.n_bins, config_.bin_hz);
  auto energy = ops::log1p(g, ops::matmul(g, rows, power_bins_by_frames));
  return MelSpec<T>{ops::reshape(g, energy, Shape{harmonics_, n_filters(), frames}), frame_rate};
}

template <typename T>
MelSpec<T> TriangularFilterbank<T>::apply(Graph<T>& g, const Spectrogram& spec) const {
  return apply_transposed(g, transpose_power<T>(spec), spec.frame_rate);
}

template <typename T>
void TriangularFilterbank<T>::set_learnable(bool learnable) {
  raw_centers.set_requires_grad(learnable);
  raw_bandwidths.set_requires_grad(learnable);
}

template <typename T>
std::vector<NamedTensor<T>> TriangularFilterbank<T>::parameters() const {
  return {{"raw_centers", raw_centers}, {"raw_bandwidths", raw_bandwidths}};
}

template class TriangularFilterbank<float>;
template class TriangularFilterbank<double>;
template Tensor<float> transpose_power<float>(const Spectrogram&);
template Tensor<double> transpose_power<double>(const Spectrogram&);
template Tensor<float> triangle_responses(Graph<float>&, const Tensor<float>&, const Tensor<float>&, std::size_t,
                                          std::size_t, double);
template Tensor<double> triangle_responses(Graph<double>&, const Tensor<double>&, const Tensor<double>&,
                                           std::size_t, std::size_t, double);

}  // namespace tmnn
