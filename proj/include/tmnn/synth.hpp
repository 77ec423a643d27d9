#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tmnn/data_io.hpp"
#include "tmnn/dsp.hpp"
#include "tmnn/training.hpp"

namespace tmnn {

/// Sinusoidally amplitude-modulated tones in white noise. The class of a
/// clip is its modulation rate; carriers are drawn uniformly per clip.
struct SyntheticConfig {
  std::size_t n_clips = 900;
  std::size_t n_train = 600;
  std::size_t n_val = 150;
  double seconds = 3.0;
  double carrier_min_hz = 500.0;
  double carrier_max_hz = 4000.0;
  std::vector<double> rates_hz = {2.0, 8.0, 24.0};
  double depth = 1.0;
  double snr_db = 20.0;
  std::uint64_t seed = 0;

  std::vector<std::string> class_names() const;
};

struct SyntheticClip {
  AudioClip audio;
  int label = 0;
  Split split = Split::kTrain;
  double carrier_hz = 0.0;
};

/// Classes are balanced (clip i has class i mod n_classes) and the split
/// assignment is a seeded permutation.
std::vector<SyntheticClip> generate_am_clips(const SyntheticConfig& config);

/// One-hot dataset of the clips in `split`.
Dataset synthetic_dataset(const std::vector<SyntheticClip>& clips, Split split, std::size_t n_classes);

/// Writes PCM16 WAVs plus a keyword manifest.csv into `dir`; returns the manifest path.
std::filesystem::path write_synthetic(const std::filesystem::path& dir, const SyntheticConfig& config);

}  // namespace tmnn
