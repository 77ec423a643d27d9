#pragma once

#include <filesystem>
#include <vector>

#include "tmnn/frontend_mel.hpp"
#include "tmnn/frontend_tm.hpp"

namespace tmnn {

struct ModulationSpectrum {
  std::vector<double> magnitudes;  // K = floor(T / 2) + 1 values
  std::vector<double> freq_hz;     // k * frame_rate / T
};

/// RMS over all (harmonic, filter) channels of |DFT| of each mean-removed
/// envelope. Requires at least two frames.
ModulationSpectrum modulation_spectrum(const MelSpec<double>& mel);
ModulationSpectrum modulation_spectrum(const MelSpec<float>& mel);

void write_modulation_spectrum_csv(const std::filesystem::path& path, const ModulationSpectrum& spectrum);

/// |DTFT| of `taps` at n_points frequencies evenly spaced over [0, frame_rate / 2].
std::vector<double> magnitude_response(const std::vector<double>& taps, double frame_rate, std::size_t n_points = 256);

/// One row per (h, f): harmonic, filter, center_hz, bandwidth_hz, then the
/// n_bins response values.
void write_filterbank_csv(const std::filesystem::path& path, const TriangularFilterbank<float>& fb);

/// One row per modulation filter: f1_hz, f2_hz, the kernel taps and the
/// 256-point magnitude response.
void write_modulation_filters_csv(const std::filesystem::path& path, const SincModFilterbank<float>& mod);

}  // namespace tmnn
