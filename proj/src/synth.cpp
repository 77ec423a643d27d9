#include "tmnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace tmnn {

std::vector<std::string> SyntheticConfig::class_names() const {
  std::vector<std::string> names;
  for (double r : rates_hz) {
    std::ostringstream s;
    s << "am" << r << "hz";
    names.push_back(s.str());
  }
  return names;
}

std::vector<SyntheticClip> generate_am_clips(const SyntheticConfig& config) {
  if (config.rates_hz.empty()) throw std::invalid_argument("at least one modulation rate is required");
  if (config.n_train + config.n_val > config.n_clips) throw std::invalid_argument("split sizes exceed clip count");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> carrier(config.carrier_min_hz, config.carrier_max_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(config.seconds * kSampleRate));
  const double noise_scale = std::pow(10.0, -config.snr_db / 20.0);

  std::vector<SyntheticClip> clips(config.n_clips);
  std::vector<double> tone(n);
  for (std::size_t i = 0; i < config.n_clips; ++i) {
    auto& clip = clips[i];
    clip.label = static_cast<int>(i % config.rates_hz.size());
    clip.carrier_hz = carrier(rng);
    const double rate = config.rates_hz[static_cast<std::size_t>(clip.label)];
    const double pc = phase(rng), pm = phase(rng);
    double power = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double time = static_cast<double>(t) / kSampleRate;
      const double env = 1.0 + config.depth * std::sin(2.0 * std::numbers::pi * rate * time + pm);
      tone[t] = env * std::sin(2.0 * std::numbers::pi * clip.carrier_hz * time + pc);
      power += tone[t] * tone[t];
    }
    const double sigma = std::sqrt(power / static_cast<double>(n)) * noise_scale;
    // Peak of the noiseless tone is at most 1 + depth; leave headroom for noise.
    const double gain = 0.5 / (1.0 + config.depth);
    clip.audio.sample_rate = kSampleRate;
    clip.audio.samples.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      clip.audio.samples[t] = static_cast<float>(std::clamp(gain * (tone[t] + sigma * noise(rng)), -1.0, 1.0));
    }
  }
  std::vector<std::size_t> perm(config.n_clips);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    clips[perm[j]].split = j < config.n_train ? Split::kTrain
                           : j < config.n_train + config.n_val ? Split::kVal
                                                               : Split::kTest;
  }
  return clips;
}

Dataset synthetic_dataset(const std::vector<SyntheticClip>& clips, Split split, std::size_t n_classes) {
  std::vector<AudioClip> audio;
  std::vector<std::vector<std::uint8_t>> labels;
  for (const auto& c : clips) {
    if (c.split != split) continue;
    audio.push_back(c.audio);
    std::vector<std::uint8_t> row(n_classes, 0);
    row.at(static_cast<std::size_t>(c.label)) = 1;
    labels.push_back(std::move(row));
  }
  return Dataset::in_memory(std::move(audio), std::move(labels), n_classes);
}

std::filesystem::path write_synthetic(const std::filesystem::path& dir, const SyntheticConfig& config) {
  const auto clips = generate_am_clips(config);
  const auto names = config.class_names();
  std::filesystem::create_directories(dir / "audio");
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    std::ostringstream rel;
    rel << "audio/clip" << std::setw(4) << std::setfill('0') << i << ".wav";
    write_wav(dir / rel.str(), clips[i].audio, WavEncoding::kPcm16);
    rows.push_back({rel.str(), clips[i].split, {names[static_cast<std::size_t>(clips[i].label)]}, 0});
  }
  const auto manifest = dir / "manifest.csv";
  write_manifest(manifest, rows);
  return manifest;
}

}  // namespace tmnn
