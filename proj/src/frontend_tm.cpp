#include "tmnn/frontend_tm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "tmnn/ops.hpp"

namespace tmnn {

namespace {

// sin(pi x) and cos(pi x), exact at integers and half-integers.
double sin_pi(double x) {
  const double r = std::fmod(x, 2.0);
  if (r == 0.0 || std::abs(r) == 1.0) return 0.0;
  return std::sin(std::numbers::pi * r);
}

double cos_pi(double x) {
  const double r = std::fmod(std::abs(x), 2.0);
  if (r == 0.5 || r == 1.5) return 0.0;
  return std::cos(std::numbers::pi * r);
}

// Ideal low-pass tap (2 f / fr) sinc(2 pi f k / fr), and its derivative in f.
double lowpass_tap(double f, double k, double fr) {
  if (k == 0.0) return 2.0 * f / fr;
  return sin_pi(2.0 * f * k / fr) / (std::numbers::pi * k);
}

double lowpass_tap_dfreq(double f, double k, double fr) { return 2.0 / fr * cos_pi(2.0 * f * k / fr); }

double logit(double p) { return std::log(p / (1.0 - p)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

}  // namespace

std::vector<double> hamming_window(std::size_t length) {
  if (length == 0) throw std::invalid_argument("window length must be positive");
  std::vector<double> w(length, 1.0);
  if (length == 1) return w;
  const double half = static_cast<double>(length - 1) / 2.0;
  for (std::size_t n = 0; n < length; ++n) {
    // Written around the center so w[n] == w[N-1-n] bit for bit.
    const double k = std::abs(static_cast<double>(n) - half);
    w[n] = 0.54 + 0.46 * cos_pi(k / half);
  }
  return w;
}

std::vector<double> sinc_kernel(double low_hz, double high_hz, double frame_rate, std::size_t length) {
  if (length % 2 == 0) throw std::invalid_argument("sinc kernel length must be odd");
  if (!(low_hz < high_hz)) throw std::invalid_argument("sinc kernel needs low edge < high edge");
  if (low_hz < 0.0 || high_hz > frame_rate / 2.0) {
    throw std::invalid_argument("sinc kernel edges must lie within [0, frame_rate / 2]");
  }
  const auto window = hamming_window(length);
  const double center = static_cast<double>(length / 2);
  std::vector<double> h(length);
  for (std::size_t n = 0; n < length; ++n) {
    const double k = static_cast<double>(n) - center;
    h[n] = (lowpass_tap(high_hz, k, frame_rate) - lowpass_tap(low_hz, k, frame_rate)) * window[n];
  }
  return h;
}

template <typename T>
Tensor<T> sinc_bandpass_bank(Graph<T>& g, const Tensor<T>& low_hz, const Tensor<T>& high_hz, double frame_rate,
                             std::size_t length) {
  if (low_hz.numel() != high_hz.numel()) throw ShapeError("band edge count mismatch");
  if (length % 2 == 0) throw ShapeError("sinc kernel length must be odd");
  const std::size_t n_filters = low_hz.numel();
  const auto window = hamming_window(length);
  const double center = static_cast<double>(length / 2);
  Tensor<T> out(Shape{n_filters, length});
  auto o = out.data();
  for (std::size_t m = 0; m < n_filters; ++m) {
    const double lo = low_hz.data()[m];
    const double hi = high_hz.data()[m];
    if (!(lo < hi)) throw std::invalid_argument("sinc kernel needs low edge < high edge");
    for (std::size_t n = 0; n < length; ++n) {
      const double k = static_cast<double>(n) - center;
      o[m * length + n] = static_cast<T>((lowpass_tap(hi, k, frame_rate) - lowpass_tap(lo, k, frame_rate)) * window[n]);
    }
  }
  ops::check_finite(out.data(), "sinc_bandpass_bank");
  if (g.tracks({&low_hz, &high_hz})) {
    g.record("sinc_bandpass_bank", {low_hz, high_hz}, out, [=]() mutable {
      auto go = out.grad();
      auto gl = low_hz.requires_grad() ? low_hz.ensure_grad() : std::span<T>{};
      auto gh = high_hz.requires_grad() ? high_hz.ensure_grad() : std::span<T>{};
      for (std::size_t m = 0; m < n_filters; ++m) {
        const double lo = low_hz.data()[m];
        const double hi = high_hz.data()[m];
        double dl = 0.0, dh = 0.0;
        for (std::size_t n = 0; n < length; ++n) {
          const double k = static_cast<double>(n) - center;
          const double gw = static_cast<double>(go[m * length + n]) * window[n];
          dh += gw * lowpass_tap_dfreq(hi, k, frame_rate);
          dl -= gw * lowpass_tap_dfreq(lo, k, frame_rate);
        }
        if (!gl.empty()) gl[m] += static_cast<T>(dl);
        if (!gh.empty()) gh[m] += static_cast<T>(dh);
      }
    });
  }
  return out;
}

std::size_t count_output_channels(std::size_t n_harmonics, std::size_t n_mod_filters) {
  return n_harmonics * (n_mod_filters + 1);
}

template <typename T>
Tensor<T> assemble_modulation(Graph<T>& g, const Tensor<T>& energies, const Tensor<T>& filtered,
                              std::size_t n_harmonics) {
  if (energies.rank() != 2 || filtered.rank() != 3 || filtered.size(0) != energies.size(0) ||
      filtered.size(2) != energies.size(1) || energies.size(0) % n_harmonics != 0) {
    throw ShapeError("assemble_modulation shape mismatch: " + shape_string(energies.shape()) + " and " +
                     shape_string(filtered.shape()));
  }
  const std::size_t rows = energies.size(0), frames = energies.size(1), mods = filtered.size(1);
  const std::size_t n_filters = rows / n_harmonics;
  const std::size_t planes = n_harmonics * (mods + 1);
  Tensor<T> out(Shape{planes, n_filters, frames});
  // Offsets of plane row (p, f) into energies or filtered.
  auto o = out.data();
  auto ev = energies.data();
  auto sv = filtered.data();
  for (std::size_t h = 0; h < n_harmonics; ++h) {
    for (std::size_t f = 0; f < n_filters; ++f) {
      const std::size_t r = h * n_filters + f;
      T* dst = o.data() + ((h * (mods + 1)) * n_filters + f) * frames;
      std::copy_n(ev.data() + r * frames, frames, dst);
      for (std::size_t m = 0; m < mods; ++m) {
        T* dm = o.data() + ((h * (mods + 1) + 1 + m) * n_filters + f) * frames;
        std::copy_n(sv.data() + (r * mods + m) * frames, frames, dm);
      }
    }
  }
  if (g.tracks({&energies, &filtered})) {
    g.record("assemble_modulation", {energies, filtered}, out, [=]() mutable {
      auto go = out.grad();
      auto ge = energies.requires_grad() ? energies.ensure_grad() : std::span<T>{};
      auto gs = filtered.requires_grad() ? filtered.ensure_grad() : std::span<T>{};
      for (std::size_t h = 0; h < n_harmonics; ++h) {
        for (std::size_t f = 0; f < n_filters; ++f) {
          const std::size_t r = h * n_filters + f;
          const T* src = go.data() + ((h * (mods + 1)) * n_filters + f) * frames;
          if (!ge.empty()) {
            for (std::size_t t = 0; t < frames; ++t) ge[r * frames + t] += src[t];
          }
          if (gs.empty()) continue;
          for (std::size_t m = 0; m < mods; ++m) {
            const T* sm = go.data() + ((h * (mods + 1) + 1 + m) * n_filters + f) * frames;
            for (std::size_t t = 0; t < frames; ++t) gs[(r * mods + m) * frames + t] += sm[t];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
ModulationTensor<T> modulate_with_kernels(Graph<T>& g, const MelSpec<T>& mel, const Tensor<T>& kernels) {
  const std::size_t harmonics = mel.harmonics(), filters = mel.filters(), frames = mel.frames();
  ModulationTensor<T> result;
  result.n_harmonics = harmonics;
  result.frame_rate = mel.frame_rate;
  if (!kernels.defined()) {
    result.values = mel.energies;
    return result;
  }
  result.n_mod_filters = kernels.size(0);
  auto rows = ops::reshape(g, mel.energies, Shape{harmonics * filters, frames});
  auto filtered = ops::conv1d_bank(g, rows, kernels);
  result.values = assemble_modulation(g, rows, filtered, harmonics);
  return result;
}

template <typename T>
SincModFilterbank<T> SincModFilterbank<T>::init(std::size_t n_filters, double frame_rate) {
  SincModFilterbank fb;
  fb.frame_rate_ = frame_rate;
  if (n_filters == 0) return fb;
  const double nyq = frame_rate / 2.0;
  const double lo = std::log(0.5), hi = std::log(nyq);
  std::vector<double> edges(n_filters + 1);
  for (std::size_t i = 0; i <= n_filters; ++i) {
    edges[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_filters));
  }
  // The top edge sits just under nyq so its gradient is not clipped away.
  edges.back() = nyq - 0.01;
  std::vector<double> low(edges.begin(), edges.end() - 1);
  std::vector<double> high(edges.begin() + 1, edges.end());
  return from_edges(low, high, frame_rate);
}

template <typename T>
SincModFilterbank<T> SincModFilterbank<T>::from_edges(const std::vector<double>& low_hz,
                                                      const std::vector<double>& high_hz, double frame_rate) {
  if (low_hz.size() != high_hz.size()) throw std::invalid_argument("band edge lists differ in length");
  SincModFilterbank fb;
  fb.frame_rate_ = frame_rate;
  if (low_hz.empty()) return fb;
  const double nyq = frame_rate / 2.0;
  const std::size_t n = low_hz.size();
  std::vector<T> rl(n), rb(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double lo = low_hz[m], hi = high_hz[m];
    if (!(lo > 0.0 && lo < nyq - kLowMarginHz)) throw std::invalid_argument("low edge outside (0, nyq - margin)");
    if (!(hi - lo > kMinBandHz && hi <= nyq)) throw std::invalid_argument("high edge must exceed low edge by the minimum band and stay <= nyq");
    rl[m] = static_cast<T>(logit(lo / (nyq - kLowMarginHz)));
    rb[m] = static_cast<T>(softplus_inverse(hi - lo - kMinBandHz));
  }
  fb.raw_low = Tensor<T>(Shape{n}, std::move(rl));
  fb.raw_band = Tensor<T>(Shape{n}, std::move(rb));
  fb.raw_low.set_requires_grad(true);
  fb.raw_band.set_requires_grad(true);
  return fb;
}

template <typename T>
Tensor<T> SincModFilterbank<T>::low_hz(Graph<T>& g) const {
  return ops::scale(g, ops::sigmoid(g, raw_low), static_cast<T>(nyquist() - kLowMarginHz));
}

template <typename T>
Tensor<T> SincModFilterbank<T>::high_hz(Graph<T>& g) const {
  auto band = ops::add_scalar(g, ops::softplus(g, raw_band), static_cast<T>(kMinBandHz));
  return ops::clamp_max(g, ops::add(g, low_hz(g), band), static_cast<T>(nyquist()));
}

template <typename T>
Tensor<T> SincModFilterbank<T>::kernels(Graph<T>& g) const {
  if (n_filters() == 0) return {};
  return sinc_bandpass_bank(g, low_hz(g), high_hz(g), frame_rate_);
}

template <typename T>
ModulationTensor<T> SincModFilterbank<T>::modulate(Graph<T>& g, const MelSpec<T>& mel) const {
  if (std::abs(mel.frame_rate - frame_rate_) > 1e-9) {
    throw std::invalid_argument("envelope frame rate " + std::to_string(mel.frame_rate) +
                                " differs from modulation filterbank rate " + std::to_string(frame_rate_));
  }
  return modulate_with_kernels(g, mel, kernels(g));
}

template <typename T>
std::vector<NamedTensor<T>> SincModFilterbank<T>::parameters() const {
  if (n_filters() == 0) return {};
  return {{"raw_low", raw_low}, {"raw_band", raw_band}};
}

template class SincModFilterbank<float>;
template class SincModFilterbank<double>;
template Tensor<float> sinc_bandpass_bank(Graph<float>&, const Tensor<float>&, const Tensor<float>&, double,
                                          std::size_t);
template Tensor<double> sinc_bandpass_bank(Graph<double>&, const Tensor<double>&, const Tensor<double>&, double,
                                           std::size_t);
template ModulationTensor<float> modulate_with_kernels(Graph<float>&, const MelSpec<float>&, const Tensor<float>&);
template ModulationTensor<double> modulate_with_kernels(Graph<double>&, const MelSpec<double>&,
                                                        const Tensor<double>&);
template Tensor<float> assemble_modulation(Graph<float>&, const Tensor<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> assemble_modulation(Graph<double>&, const Tensor<double>&, const Tensor<double>&,
                                            std::size_t);

}  // namespace tmnn
