#include "tmnn/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

namespace tmnn {

void AudioClip::validate() const {
  if (!(sample_rate > 0.0)) throw AudioError("sample rate must be positive");
  if (samples.empty()) throw AudioError("audio clip has no samples");
  for (float s : samples) {
    if (!std::isfinite(s)) throw AudioError("audio clip contains non-finite samples");
  }
}

namespace {

template <typename U>
U read_le(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  return v;
}

template <typename U>
void write_le(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioClip decode_wav_bytes(std::span<const char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw AudioError("truncated fmt chunk");
      format = read_le<std::uint16_t>(bytes.data() + body);
      channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw AudioError("truncated extensible fmt chunk");
        format = read_le<std::uint16_t>(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw AudioError("data chunk before fmt chunk");
      if (body + size > bytes.size()) throw AudioError("truncated data chunk");
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw AudioError("unsupported codec (format " + std::to_string(format) + ", " + std::to_string(bits) +
                         " bits); expected PCM16 or float32");
      }
      if (channels < 1 || channels > 2) throw AudioError("unsupported channel count " + std::to_string(channels));
      if (rate == 0) throw AudioError("zero sample rate");
      const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
      const std::size_t n = size / frame_bytes;
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(n);
      const char* src = bytes.data() + body;
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const char* p = src + i * frame_bytes + c * (bits / 8);
          acc += pcm16 ? read_le<std::int16_t>(p) / 32768.0 : static_cast<double>(read_le<float>(p));
        }
        clip.samples[i] = static_cast<float>(acc / channels);
      }
      clip.validate();
      return clip;
    }
    pos = body + size + (size & 1u);
  }
  throw AudioError(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

AudioClip decode_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  try {
    return decode_wav_bytes(bytes);
  } catch (const AudioError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  clip.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * bits / 8);
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, rate);
  write_le<std::uint32_t>(out, rate * bits / 8);
  write_le<std::uint16_t>(out, bits / 8);
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (float s : clip.samples) {
    if (pcm) {
      const double scaled = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0) * 32768.0;
      write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(scaled)));
    } else {
      write_le<float>(out, s);
    }
  }
}

namespace {

double kaiser(double x, double beta) {
  if (std::abs(x) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

double sinc_pi(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

}  // namespace

AudioClip resample(const AudioClip& clip, double target_rate) {
  clip.validate();
  if (clip.sample_rate < 8000.0) throw AudioError("resample needs a source rate of at least 8 kHz");
  if (clip.sample_rate == target_rate) return clip;

  const auto src = static_cast<std::int64_t>(std::llround(clip.sample_rate));
  const auto dst = static_cast<std::int64_t>(std::llround(target_rate));
  const std::int64_t g = std::gcd(src, dst);
  const std::int64_t up = dst / g;    // phases
  const std::int64_t down = src / g;  // input step per `up` outputs

  constexpr double kZeroCrossings = 32.0;  // half of the 64 taps, at the lower rate
  constexpr double kBeta = 7.857;          // Kaiser beta for ~80 dB stopband
  constexpr double kCutoffFraction = 0.44; // of the lower rate
  const double low_rate = static_cast<double>(std::min(src, dst));
  const double cutoff = kCutoffFraction * low_rate;
  const double half_width = kZeroCrossings * static_cast<double>(src) / low_rate;  // in input samples
  const auto taps = static_cast<std::int64_t>(std::ceil(half_width));

  // table[phase][j] weights input sample k0 - taps + 1 + j for output phase `phase`.
  const std::int64_t width = 2 * taps;
  std::vector<double> table(static_cast<std::size_t>(up * width));
  for (std::int64_t phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    for (std::int64_t j = 0; j < width; ++j) {
      const double d = static_cast<double>(j - taps + 1) - frac;
      table[static_cast<std::size_t>(phase * width + j)] =
          (2.0 * cutoff / static_cast<double>(src)) * sinc_pi(2.0 * cutoff * d / static_cast<double>(src)) *
          kaiser(d / half_width, kBeta);
    }
  }

  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const auto n_out = static_cast<std::int64_t>(
      std::llround(static_cast<double>(n_in) * static_cast<double>(dst) / static_cast<double>(src)));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 1)));
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(out.samples.size()); ++n) {
    const std::int64_t pos = n * down;
    const std::int64_t k0 = pos / up;
    const std::int64_t phase = pos % up;
    const double* w = table.data() + phase * width;
    double acc = 0.0;
    for (std::int64_t j = 0; j < width; ++j) {
      const std::int64_t k = k0 - taps + 1 + j;
      if (k >= 0 && k < n_in) acc += w[j] * clip.samples[static_cast<std::size_t>(k)];
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

void fft_inplace(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (n == 0 || !std::has_single_bit(n)) throw std::invalid_argument("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first to keep the phase argument exact.
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

std::size_t stft_frame_count(std::size_t n_samples, std::size_t fft_size, std::size_t hop) {
  if (n_samples < fft_size) return 0;
  return (n_samples - fft_size) / hop + 1;
}

Spectrogram stft_power(const AudioClip& clip) {
  clip.validate();
  if (clip.sample_rate != kSampleRate) throw AudioError("stft_power expects 16 kHz audio");
  const std::size_t frames = stft_frame_count(clip.samples.size());
  if (frames == 0) {
    throw AudioError("clip of " + std::to_string(clip.samples.size()) + " samples is shorter than one " +
                     std::to_string(kFftSize) + "-sample window");
  }
  const auto window = hann_window(kFftSize);
  Spectrogram spec;
  spec.power = Tensor<float>(Shape{frames, kBins});
  auto out = spec.power.data();
  std::vector<std::complex<double>> buf(kFftSize);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* src = clip.samples.data() + f * kHop;
    for (std::size_t i = 0; i < kFftSize; ++i) buf[i] = {window[i] * src[i], 0.0};
    fft_inplace(buf);
    for (std::size_t b = 0; b < kBins; ++b) out[f * kBins + b] = static_cast<float>(std::norm(buf[b]));
  }
  spec.frame_rate = clip.sample_rate / static_cast<double>(kHop);
  return spec;
}

}  // namespace tmnn
