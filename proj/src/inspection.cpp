#include "tmnn/inspection.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "tmnn/dsp.hpp"

namespace tmnn {

namespace {

template <typename T>
ModulationSpectrum modulation_spectrum_impl(const MelSpec<T>& mel) {
  const std::size_t frames = mel.frames();
  if (frames < 2) throw std::invalid_argument("modulation spectrum needs at least two frames");
  const std::size_t channels = mel.harmonics() * mel.filters();
  const std::size_t k_count = frames / 2 + 1;
  std::vector<double> power(k_count, 0.0);
  std::vector<double> envelope(frames);
  auto e = mel.energies.data();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double mean = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mean += e[ch * frames + t];
    mean /= static_cast<double>(frames);
    for (std::size_t t = 0; t < frames; ++t) envelope[t] = e[ch * frames + t] - mean;
    const auto spectrum = naive_dft(envelope);
    for (std::size_t k = 0; k < k_count; ++k) power[k] += std::norm(spectrum[k]);
  }
  ModulationSpectrum out;
  out.magnitudes.resize(k_count);
  out.freq_hz.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    out.magnitudes[k] = std::sqrt(power[k] / static_cast<double>(channels));
    out.freq_hz[k] = static_cast<double>(k) * mel.frame_rate / static_cast<double>(frames);
  }
  return out;
}

}  // namespace

ModulationSpectrum modulation_spectrum(const MelSpec<double>& mel) { return modulation_spectrum_impl(mel); }
ModulationSpectrum modulation_spectrum(const MelSpec<float>& mel) { return modulation_spectrum_impl(mel); }

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(9);
  return out;
}

}  // namespace

void write_modulation_spectrum_csv(const std::filesystem::path& path, const ModulationSpectrum& spectrum) {
  auto out = open_csv(path);
  out << "modulation_hz,rms_magnitude\n";
  for (std::size_t k = 0; k < spectrum.magnitudes.size(); ++k) {
    out << spectrum.freq_hz[k] << ',' << spectrum.magnitudes[k] << '\n';
  }
}

std::vector<double> magnitude_response(const std::vector<double>& taps, double frame_rate, std::size_t n_points) {
  std::vector<double> mag(n_points);
  const double c = 0.5 * static_cast<double>(taps.size() - 1);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double hz = n_points > 1 ? 0.5 * frame_rate * static_cast<double>(i) / static_cast<double>(n_points - 1) : 0.0;
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < taps.size(); ++n) {
      acc += taps[n] * std::polar(1.0, -2.0 * std::numbers::pi * hz * (static_cast<double>(n) - c) / frame_rate);
    }
    mag[i] = std::abs(acc);
  }
  return mag;
}

void write_filterbank_csv(const std::filesystem::path& path, const TriangularFilterbank<float>& fb) {
  Graph<float> g(false);
  const auto centers = fb.centers_hz(g), bws = fb.bandwidths_hz(g), m = fb.filter_matrix(g);
  const std::size_t n_f = fb.n_filters(), n_b = fb.config().n_bins;
  auto out = open_csv(path);
  out << "harmonic,filter,center_hz,bandwidth_hz";
  for (std::size_t b = 0; b < n_b; ++b) out << ",bin" << b;
  out << '\n';
  for (std::size_t h = 0; h < fb.n_harmonics(); ++h) {
    for (std::size_t f = 0; f < n_f; ++f) {
      out << h + 1 << ',' << f << ',' << centers.data()[f] << ',' << bws.data()[f];
      for (std::size_t b = 0; b < n_b; ++b) out << ',' << m.data()[(h * n_f + f) * n_b + b];
      out << '\n';
    }
  }
}

void write_modulation_filters_csv(const std::filesystem::path& path, const SincModFilterbank<float>& mod) {
  Graph<float> g(false);
  auto out = open_csv(path);
  out << "filter,f1_hz,f2_hz";
  for (std::size_t n = 0; n < kModKernelLength; ++n) out << ",tap" << n;
  for (std::size_t i = 0; i < 256; ++i) out << ",mag" << i;
  out << '\n';
  if (mod.n_filters() == 0) return;
  const auto lo = mod.low_hz(g), hi = mod.high_hz(g), k = mod.kernels(g);
  for (std::size_t m = 0; m < mod.n_filters(); ++m) {
    std::vector<double> taps(k.data().begin() + m * kModKernelLength, k.data().begin() + (m + 1) * kModKernelLength);
    out << m << ',' << lo.data()[m] << ',' << hi.data()[m];
    for (double t : taps) out << ',' << t;
    for (double v : magnitude_response(taps, mod.frame_rate())) out << ',' << v;
    out << '\n';
  }
}

}  // namespace tmnn
