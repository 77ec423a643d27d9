#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "tmnn/tensor.hpp"

namespace tmnn {

/// Unreadable, truncated or unsupported audio.
class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSampleRate = 16000.0;
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kHop = 256;
inline constexpr std::size_t kBins = kFftSize / 2 + 1;

struct AudioClip {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  double sample_rate = kSampleRate;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  void validate() const;
};

struct Spectrogram {
  Tensor<float> power;  // [frames x bins], |DFT|^2
  double frame_rate = kSampleRate / static_cast<double>(kHop);
  std::size_t fft_size = kFftSize;
  std::size_t hop = kHop;

  std::size_t frames() const { return power.size(0); }
  std::size_t bins() const { return power.size(1); }
};

enum class WavEncoding { kPcm16, kFloat32 };

/// RIFF/WAVE, PCM16 or IEEE float32, one or two channels; channels are averaged.
AudioClip decode_wav(const std::filesystem::path& path);
AudioClip decode_wav_bytes(std::span<const char> bytes);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::kFloat32);

/// Band-limited Kaiser-windowed sinc resampling, 64 taps per phase at the
/// lower of the two rates. Output length is round(N * target / source).
AudioClip resample(const AudioClip& clip, double target_rate = kSampleRate);

/// Hann-windowed framing without padding: floor((N - 512) / 256) + 1 frames.
Spectrogram stft_power(const AudioClip& clip);

std::size_t stft_frame_count(std::size_t n_samples, std::size_t fft_size = kFftSize, std::size_t hop = kHop);

/// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data);

/// O(N^2) reference transform of a real sequence (any length).
std::vector<std::complex<double>> naive_dft(std::span<const double> x);

}  // namespace tmnn
