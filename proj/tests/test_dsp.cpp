#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "tmnn/dsp.hpp"

using namespace tmnn;

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

std::string pcm16_wav(const std::vector<std::int16_t>& interleaved, std::uint16_t channels, std::uint32_t rate) {
  std::string s = "RIFF";
  put_u32(s, static_cast<std::uint32_t>(36 + 2 * interleaved.size()));
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, channels);
  put_u32(s, rate);
  put_u32(s, rate * channels * 2);
  put_u16(s, static_cast<std::uint16_t>(channels * 2));
  put_u16(s, 16);
  s += "data";
  put_u32(s, static_cast<std::uint32_t>(2 * interleaved.size()));
  for (auto v : interleaved) put_u16(s, static_cast<std::uint16_t>(v));
  return s;
}

AudioClip sine(double hz, double rate, std::size_t n, double amp = 0.5) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  return c;
}

// Frequency of the largest |DFT| bin, refined by parabolic interpolation.
double peak_hz(const std::vector<float>& x, double rate) {
  const std::size_t n = x.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / n);
      re += w * x[t] * std::cos(2.0 * std::numbers::pi * k * t / n);
      im -= w * x[t] * std::sin(2.0 * std::numbers::pi * k * t / n);
    }
    mag[k] = std::log(std::hypot(re, im) + 1e-30);
  }
  const std::size_t k = static_cast<std::size_t>(std::max_element(mag.begin() + 1, mag.end() - 1) - mag.begin());
  const double delta = 0.5 * (mag[k - 1] - mag[k + 1]) / (mag[k - 1] - 2 * mag[k] + mag[k + 1]);
  return (static_cast<double>(k) + delta) * rate / static_cast<double>(n);
}

}  // namespace

TEST_CASE("wav decoding") {
  auto silence = decode_wav_bytes(pcm16_wav(std::vector<std::int16_t>(16000, 0), 1, 16000));
  CHECK(silence.samples.size() == 16000);
  CHECK(silence.sample_rate == 16000.0);
  CHECK(std::all_of(silence.samples.begin(), silence.samples.end(), [](float v) { return v == 0.0f; }));

  std::vector<std::int16_t> stereo;
  for (int i = 0; i < 100; ++i) {
    stereo.push_back(16384);
    stereo.push_back(-16384);
  }
  auto mono = decode_wav_bytes(pcm16_wav(stereo, 2, 16000));
  CHECK(mono.samples.size() == 100);
  CHECK(std::all_of(mono.samples.begin(), mono.samples.end(), [](float v) { return v == 0.0f; }));

  auto one = decode_wav_bytes(pcm16_wav({16384}, 1, 16000));
  CHECK(one.samples[0] == 0.5f);

  auto truncated = pcm16_wav(std::vector<std::int16_t>(10, 1), 1, 16000);
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_AS(decode_wav_bytes(truncated), AudioError);
  auto adpcm = pcm16_wav({1, 2}, 1, 16000);
  adpcm[20] = 2;
  CHECK_THROWS_AS(decode_wav_bytes(adpcm), AudioError);
  CHECK_THROWS_AS(decode_wav_bytes(std::string("garbage")), AudioError);
}

TEST_CASE("float wav round trip") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  AudioClip clip;
  clip.samples.resize(4000);
  for (auto& s : clip.samples) s = dist(rng);
  const auto path = std::filesystem::temp_directory_path() / "tmnn_roundtrip.wav";
  write_wav(path, clip, WavEncoding::kFloat32);
  auto back = decode_wav(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  float worst = 0.0f;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - clip.samples[i]));
  CHECK(worst < 1e-6f);
  std::filesystem::remove(path);
}

TEST_CASE("resampling") {
  auto same = sine(440, 16000, 1000);
  CHECK(resample(same).samples == same.samples);

  auto src = sine(1000, 44100, 44100);
  auto out = resample(src);
  CHECK(out.sample_rate == 16000.0);
  CHECK(out.samples.size() == 16000);
  std::vector<float> mid(out.samples.begin() + 4000, out.samples.begin() + 12000);
  CHECK(std::abs(peak_hz(mid, 16000) - 1000.0) < 0.5);

  CHECK(resample(sine(100, 22050, 1001)).samples.size() == static_cast<std::size_t>(std::llround(1001 * 16000.0 / 22050)));
  CHECK_THROWS(resample(sine(100, 4000, 100)));
}

TEST_CASE("resampled white noise has no energy above the new band edge") {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> dist(0.0f, 0.3f);
  AudioClip noise;
  noise.sample_rate = 44100;
  noise.samples.resize(44100);
  for (auto& s : noise.samples) s = dist(rng);
  auto out = resample(noise);
  std::vector<std::complex<double>> buf(8192);
  std::vector<double> power(4097, 0.0);
  const auto w = hann_window(8192);
  for (std::size_t start = 2000; start + 8192 < out.samples.size(); start += 2048) {
    for (std::size_t i = 0; i < 8192; ++i) buf[i] = w[i] * out.samples[start + i];
    fft_inplace(buf);
    for (std::size_t k = 0; k <= 4096; ++k) power[k] += std::norm(buf[k]);
  }
  double low = 0.0, high = 0.0;
  for (std::size_t k = 0; k <= 4096; ++k) (k * 16000.0 / 8192 > 7800.0 ? high : low) += power[k];
  CHECK(10.0 * std::log10(high / low) < -60.0);
}

TEST_CASE("stft contracts") {
  CHECK(stft_frame_count(80000) == 311);
  auto tone = stft_power(sine(1000, 16000, 80000));
  CHECK(tone.frames() == 311);
  CHECK(tone.bins() == 257);
  CHECK(tone.frame_rate == 62.5);
  for (std::size_t t = 0; t < tone.frames(); t += 50) {
    auto row = tone.power.data().subspan(t * 257, 257);
    CHECK(std::max_element(row.begin(), row.end()) - row.begin() == 32);
  }
  AudioClip zeros{std::vector<float>(2000, 0.0f), 16000};
  auto z = stft_power(zeros);
  CHECK(std::all_of(z.power.data().begin(), z.power.data().end(), [](float v) { return v == 0.0f; }));
  CHECK_THROWS_AS(stft_power(AudioClip{std::vector<float>(511, 0.0f), 16000}), AudioError);
  CHECK_THROWS_AS(stft_power(sine(100, 8000, 4000)), AudioError);
}

TEST_CASE("fft matches the naive dft and parseval holds") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(512);
    for (auto& v : x) v = dist(rng);
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft_inplace(buf);
    const auto ref = naive_dft(x);
    double worst = 0.0;
    for (std::size_t k = 0; k < 512; ++k) worst = std::max(worst, std::abs(buf[k] - ref[k]));
    CHECK(worst < 1e-4);
  }
  AudioClip clip;
  clip.samples.resize(1024);
  std::uniform_real_distribution<float> fd(-1, 1);
  for (auto& s : clip.samples) s = fd(rng);
  auto spec = stft_power(clip);
  const auto w = hann_window(512);
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    double energy = 0.0;
    for (std::size_t i = 0; i < 512; ++i) energy += std::pow(w[i] * clip.samples[t * 256 + i], 2);
    double sum = 0.0;
    for (std::size_t b = 0; b < 257; ++b) sum += (b == 0 || b == 256 ? 1.0 : 2.0) * spec.power.data()[t * 257 + b];
    CHECK(sum / 512.0 == doctest::Approx(energy).epsilon(1e-4));
  }
}
