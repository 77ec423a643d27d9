// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "tmnn/backend.hpp"
#include "tmnn/dsp.hpp"
#include "tmnn/experiment.hpp"
#include "tmnn/frontend_mel.hpp"
#include "tmnn/frontend_tm.hpp"
#include "tmnn/metrics.hpp"
#include "tmnn/model.hpp"
#include "tmnn/synth.hpp"
#include "tmnn/training.hpp"

namespace fs = std::filesystem;
using namespace tmnn;
using tmnn::testing::check_gradients;
using tmnn::testing::random_tensor;
using tmnn::testing::weighted_sum;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradients for every learnable parameter class.

Outcome gradient_suite() {
  constexpr int kSeeds = 20;
  constexpr double kTol = 1e-3;
  const auto t0 = Clock::now();
  double worst_fb = 0.0, worst_mod = 0.0, worst_back = 0.0, worst_model = 0.0;
  std::size_t checked = 0;
  std::string where;
  auto track = [&](double& worst, const testing::GradReport& r, const std::string& what, int seed) {
    checked += r.checked;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      if (r.max_rel_err >= kTol) where = what + " seed " + std::to_string(seed) + ": " + r.worst;
    }
  };

  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::uniform_real_distribution<double> jitter(-0.4, 0.4);

    auto fb = TriangularFilterbank<double>::init(6, 1 + seed % 3);
    for (auto& v : fb.raw_centers.data()) v += jitter(rng);
    for (auto& v : fb.raw_bandwidths.data()) v += jitter(rng);
    auto power = random_tensor({kBins, 9}, rng, 0.0, 4.0, false);
    track(worst_fb,
          check_gradients([&](Graph<double>& g) { return weighted_sum(g, fb.apply_transposed(g, power, kFrameRate).energies); },
                          {fb.raw_centers, fb.raw_bandwidths}, 1e-5, 24, seed),
          "filterbank", seed);

    auto mod = SincModFilterbank<double>::init(1 + seed % 3);
    for (auto& v : mod.raw_low.data()) v += jitter(rng);
    for (auto& v : mod.raw_band.data()) v += jitter(rng);
    MelSpec<double> mel;
    mel.energies = random_tensor({std::size_t(1 + seed % 2), 4, 40}, rng, 0.0, 3.0, false);
    track(worst_mod,
          check_gradients([&](Graph<double>& g) { return weighted_sum(g, mod.modulate(g, mel).values); },
                          {mod.raw_low, mod.raw_band}, 1e-5, 24, seed),
          "band edges", seed);

    ResNetBackend<double> net(BackendConfig{3, 4, 2}, seed);
    auto x = random_tensor({2, 3, 8, 12}, rng);
    std::vector<Tensor<double>> weights;
    for (auto& p : net.parameters()) weights.push_back(p.tensor);
    track(worst_back,
          check_gradients([&](Graph<double>& g) { return weighted_sum(g, net.forward(g, x, true)); }, weights, 1e-5,
                          12, seed),
          "back end", seed);

    // Whole model, spectrogram to loss.
    ModelConfig cfg;
    cfg.n_filters = 6;
    cfg.n_harmonics = 1 + seed % 2;
    cfg.n_mod_filters = seed % 3;
    cfg.n_classes = 3;
    cfg.base_width = 2;
    TmnnModel<double> model(cfg, seed);
    std::vector<Spectrogram> batch(2);
    for (auto& s : batch) s.power = random_tensor({24, kBins}, rng, 0.0, 5.0, false).cast<float>();
    const std::vector<int> labels{seed % 3, (seed + 1) % 3};
    track(worst_model,
          check_gradients([&](Graph<double>& g) { return ops::cross_entropy(g, model.forward(g, batch, true), labels); },
                          model.trainable(), 1e-5, 4, seed),
          "model", seed);
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst_fb < kTol && worst_mod < kTol && worst_back < kTol && worst_model < kTol && elapsed < 120.0;
  o.detail = std::to_string(kSeeds) + " seeds, " + std::to_string(checked) + " entries; max rel err centers/bw " +
             fmt(worst_fb) + ", band edges " + fmt(worst_mod) + ", back end " + fmt(worst_back) + ", model " +
             fmt(worst_model) + "; " + fmt(elapsed) + " s";
  if (!where.empty()) o.detail += "; worst " + where;
  return o;
}

// ---------------------------------------------------------------------------
// 2. modulate against a direct double loop.

template <typename T>
double modulation_error(std::size_t h_count, std::size_t f_count, std::size_t t_count, std::size_t m_count,
                        std::mt19937_64& rng) {
  auto mod = SincModFilterbank<double>::init(m_count);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (auto& v : mod.raw_low.data()) v += jitter(rng);
  for (auto& v : mod.raw_band.data()) v += jitter(rng);
  auto energies = random_tensor({h_count, f_count, t_count}, rng, 0.0, 3.0, false);

  Graph<double> gd(false);
  const auto taps = mod.kernels(gd);
  const std::size_t len = taps.size(1), c = len / 2;

  MelSpec<T> mel;
  mel.energies = energies.cast<T>();
  SincModFilterbank<T> mod_t;
  mod_t.raw_low = mod.raw_low.cast<T>();
  mod_t.raw_band = mod.raw_band.cast<T>();
  Graph<T> g(false);
  const auto out = mod_t.modulate(g, mel).values;
  if (out.shape() != Shape{h_count * (m_count + 1), f_count, t_count}) return INFINITY;

  const auto y = energies.data();
  const auto k = taps.data();
  const auto s = out.data();
  double worst = 0.0;
  for (std::size_t h = 0; h < h_count; ++h)
    for (std::size_t f = 0; f < f_count; ++f) {
      const double* yf = &y[(h * f_count + f) * t_count];
      for (std::size_t t = 0; t < t_count; ++t) {
        const std::size_t plane = h * (m_count + 1);
        worst = std::max(worst, std::abs(static_cast<double>(s[(plane * f_count + f) * t_count + t]) - yf[t]));
        for (std::size_t m = 0; m < m_count; ++m) {
          double acc = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            const long src = static_cast<long>(t) - static_cast<long>(j) + static_cast<long>(c);
            if (src >= 0 && src < static_cast<long>(t_count)) acc += k[m * len + j] * yf[src];
          }
          const double got = s[((plane + 1 + m) * f_count + f) * t_count + t];
          worst = std::max(worst, std::abs(got - acc));
        }
      }
    }
  return worst;
}

Outcome modulation_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst_d = 0.0, worst_f = 0.0;
  std::size_t cases = 0;
  for (std::size_t f : {1u, 8u, 128u})
    for (std::size_t t : {1u, 101u, 311u})
      for (std::size_t m : {1u, 3u})
        for (std::size_t h : {1u, 2u}) {
          worst_d = std::max(worst_d, modulation_error<double>(h, f, t, m, rng));
          worst_f = std::max(worst_f, modulation_error<float>(h, f, t, m, rng));
          ++cases;
        }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst_d < 1e-5 && worst_f < 1e-5 && elapsed < 60.0;
  o.detail = std::to_string(cases) + " grid points; max abs err double " + fmt(worst_d) + ", float " + fmt(worst_f) +
             "; " + fmt(elapsed) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 3. Identity degeneracies.

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(T)) == 0;
}

Outcome identity_degeneracies() {
  std::mt19937_64 rng(31);
  bool full_band_ok = true;
  const auto taps = sinc_kernel(0.0, kFrameRate / 2.0, kFrameRate);
  for (std::size_t t : {1u, 50u, 311u}) {
    MelSpec<double> mel;
    mel.energies = random_tensor({2, 16, t}, rng, 0.0, 5.0, false);
    Graph<double> g(false);
    const Tensor<double> bank(Shape{1, taps.size()}, std::vector<double>(taps.begin(), taps.end()));
    const auto out = modulate_with_kernels(g, mel, bank).values;
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < 16 * t; ++i)
        if (out.data()[(2 * h + 1) * 16 * t + i] != mel.energies.data()[h * 16 * t + i]) full_band_ok = false;
  }

  bool frontend_ok = true, model_ok = true;
  for (std::size_t harmonics : {1u, 6u}) {
    ModelConfig cfg;
    cfg.n_filters = 32;
    cfg.n_harmonics = harmonics;
    cfg.n_mod_filters = 0;
    cfg.n_classes = 5;
    cfg.base_width = 4;
    TmnnModel<float> model(cfg, 9);
    std::vector<Spectrogram> batch(2);
    for (auto& s : batch) s.power = random_tensor({80, kBins}, rng, 0.0, 10.0, false).cast<float>();

    Graph<float> g(false);
    const auto features = model.frontend.forward(g, batch);
    std::vector<float> stacked;
    for (const auto& s : batch) {
      const auto e = model.frontend.filterbank.apply(g, s).energies;
      if (!same_bits(model.frontend.extract(g, s).values, e)) frontend_ok = false;
      stacked.insert(stacked.end(), e.data().begin(), e.data().end());
    }
    const Tensor<float> baseline(Shape{2, harmonics, 32, 80}, stacked);
    if (!same_bits(features, baseline)) frontend_ok = false;
    // Training-mode batch norm, so a fresh model needs no running statistics.
    if (!same_bits(model.forward(g, batch, true), model.backend.forward(g, baseline, true))) model_ok = false;
  }
  Outcome o;
  o.pass = full_band_ok && frontend_ok && model_ok;
  o.detail = std::string("full-band kernel bit-exact: ") + (full_band_ok ? "yes" : "no") +
             "; M=0 features bitwise equal to filterbank energies: " + (frontend_ok ? "yes" : "no") +
             "; M=0 logits bitwise equal to baseline: " + (model_ok ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------------------
// 4. DSP contracts.

Outcome dsp_contracts() {
  AudioClip five;
  five.samples.assign(5 * 16000, 0.0f);
  const std::size_t frames = stft_power(five).frames();

  AudioClip tone;
  tone.samples.resize(16000);
  for (std::size_t i = 0; i < tone.samples.size(); ++i)
    tone.samples[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0));
  const auto spec = stft_power(tone);
  bool peak_ok = true;
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    const auto row = spec.power.data().subspan(t * spec.bins(), spec.bins());
    if (std::max_element(row.begin(), row.end()) - row.begin() != 32) peak_ok = false;
  }

  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.3);
  double fft_err = 0.0;
  for (std::size_t n : {2u, 8u, 64u, 512u, 1024u}) {
    for (int trial = 0; trial < 4; ++trial) {
      std::vector<double> x(n);
      for (auto& v : x) v = noise(rng);
      std::vector<std::complex<double>> c(x.begin(), x.end());
      fft_inplace(c);
      const auto ref = naive_dft(x);
      for (std::size_t k = 0; k < n; ++k) fft_err = std::max(fft_err, std::abs(c[k] - ref[k]));
    }
  }
  // The STFT power itself against a windowed naive DFT.
  AudioClip chirp;
  chirp.samples.resize(4000);
  for (auto& v : chirp.samples) v = static_cast<float>(noise(rng));
  const auto cs = stft_power(chirp);
  const auto window = hann_window(kFftSize);
  double stft_err = 0.0;
  for (std::size_t t = 0; t < cs.frames(); ++t) {
    std::vector<double> frame(kFftSize);
    for (std::size_t i = 0; i < kFftSize; ++i) frame[i] = window[i] * chirp.samples[t * kHop + i];
    const auto ref = naive_dft(frame);
    for (std::size_t b = 0; b < kBins; ++b) {
      const double p = std::norm(ref[b]);
      stft_err = std::max(stft_err, std::abs(cs.power.data()[t * kBins + b] - p) / std::max(1.0, p));
    }
  }
  Outcome o;
  o.pass = frames == 311 && peak_ok && fft_err < 1e-4 && stft_err < 1e-4;
  o.detail = "5 s -> " + std::to_string(frames) + " frames; 1 kHz peak at bin 32 in every frame: " +
             (peak_ok ? "yes" : "no") + "; FFT vs DFT max abs " + fmt(fft_err) + "; STFT power vs DFT max rel " +
             fmt(stft_err);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Metrics against quadratic oracles.

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] && !l[j]) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

// Mean over positives of the precision among everything scored at least as high.
double per_positive_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  double total = 0.0, positives = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    positives += 1.0;
    double called = 0.0, hits = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[j] >= s[i]) {
        called += 1.0;
        hits += l[j];
      }
    total += hits / called;
  }
  return total / positives;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(555);
  double worst_roc = 0.0, worst_pr = 0.0;
  std::size_t tied_cases = 0, degenerate_ok = 0, degenerate = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 299;
    // Few distinct levels in most cases, so ties are everywhere.
    const std::size_t levels = trial % 4 == 3 ? n : 1 + rng() % 6;
    const double pos_rate = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / static_cast<double>(levels) + (levels == n ? 1e-3 * (rng() % 7) : 0.0);
      l[i] = std::bernoulli_distribution(pos_rate)(rng);
    }
    if (std::set<double>(s.begin(), s.end()).size() < n) ++tied_cases;
    const bool has_pos = std::count(l.begin(), l.end(), 1) > 0, has_neg = std::count(l.begin(), l.end(), 0) > 0;
    const auto roc = roc_auc(s, l);
    const auto pr = pr_auc(s, l);
    if (!has_pos || !has_neg) {
      ++degenerate;
      if (!roc && (has_pos == pr.has_value())) ++degenerate_ok;
      if (has_pos && pr) worst_pr = std::max(worst_pr, std::abs(*pr - per_positive_ap(s, l)));
      continue;
    }
    if (!roc || !pr) {
      worst_roc = INFINITY;
      continue;
    }
    worst_roc = std::max(worst_roc, std::abs(*roc - pairwise_auc(s, l)));
    worst_pr = std::max(worst_pr, std::abs(*pr - per_positive_ap(s, l)));
  }
  Outcome o;
  o.pass = worst_roc < 1e-12 && worst_pr < 1e-12 && degenerate_ok == degenerate;
  o.detail = "1000 cases (" + std::to_string(tied_cases) + " with ties); max |ROC - pairwise| " + fmt(worst_roc) +
             ", max |PR - per-positive AP| " + fmt(worst_pr) + "; single-class cases handled " +
             std::to_string(degenerate_ok) + "/" + std::to_string(degenerate);
  return o;
}

// ---------------------------------------------------------------------------
// 6 and 7. Synthetic modulation discrimination and the M sweep.

struct SyntheticData {
  SyntheticConfig config;
  Dataset train, val, test;
};

SyntheticData make_synthetic(std::uint64_t seed) {
  SyntheticData d;
  d.config.seed = seed;
  const auto clips = generate_am_clips(d.config);
  const std::size_t k = d.config.rates_hz.size();
  d.train = synthetic_dataset(clips, Split::kTrain, k);
  d.val = synthetic_dataset(clips, Split::kVal, k);
  d.test = synthetic_dataset(clips, Split::kTest, k);
  return d;
}

RunConfig synthetic_run_config(const fs::path& dir, std::uint64_t seed) {
  RunConfig rc;
  rc.model.front_end = FrontEndKind::kHarmonic;
  rc.model.n_filters = 32;
  rc.model.n_harmonics = 1;
  rc.model.n_mod_filters = 2;
  rc.model.n_classes = 3;
  rc.model.base_width = 8;
  rc.train = TrainConfig::defaults_for(Task::kKeyword);
  rc.train.crop_seconds = 3.0;
  rc.train.max_epochs = 20;
  rc.train.seed = seed;
  rc.output_dir = dir;
  return rc;
}

struct SweepOutcome {
  std::vector<SweepRow> rows;
  const SweepRow* find(std::size_t m) const {
    for (const auto& r : rows)
      if (r.n_mod_filters == m) return &r;
    return nullptr;
  }
};

Outcome synthetic_experiment(const SweepOutcome& sweep) {
  const auto* with = sweep.find(2);
  const auto* without = sweep.find(0);
  Outcome o;
  if (!with || !without || !with->accuracy || !without->accuracy) {
    o.pass = false;
    o.detail = "missing M=0 or M=2 run";
    return o;
  }
  o.pass = *with->accuracy >= 0.95 && with->train_seconds < 15 * 60.0 && *without->accuracy < *with->accuracy;
  o.detail = "M=2 accuracy " + fmt(*with->accuracy) + " in " + fmt(with->train_seconds) + " s (20 epochs); M=0 accuracy " +
             fmt(*without->accuracy);
  return o;
}

Outcome sweep_shape(const SweepOutcome& sweep, const fs::path& csv) {
  Outcome o;
  std::ifstream in(csv);
  std::string header, line;
  std::getline(in, header);
  std::vector<std::size_t> ms;
  while (std::getline(in, line)) ms.push_back(std::stoul(line.substr(0, line.find(','))));
  const bool csv_ok = header.rfind("M,macro_roc_auc,macro_pr_auc", 0) == 0 && ms == std::vector<std::size_t>{0, 1, 2, 4, 8};
  const auto *m1 = sweep.find(1), *m2 = sweep.find(2), *m8 = sweep.find(8);
  if (!csv_ok || !m1 || !m2 || !m8 || !m1->macro_roc_auc || !m2->macro_roc_auc || !m8->macro_roc_auc) {
    o.pass = false;
    o.detail = "sweep CSV incomplete at " + csv.string();
    return o;
  }
  const double best_small = std::max(*m1->macro_roc_auc, *m2->macro_roc_auc);
  o.pass = best_small >= *m8->macro_roc_auc;
  std::ostringstream s;
  s << std::setprecision(6) << "macro ROC-AUC by M:";
  for (const auto& r : sweep.rows) s << ' ' << r.n_mod_filters << '=' << *r.macro_roc_auc;
  s << "; max(M1, M2) " << best_small << " vs M8 " << *m8->macro_roc_auc;
  o.detail = s.str();
  return o;
}

// ---------------------------------------------------------------------------
// 8. Determinism.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string log_without_wall_clock(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("wall_seconds");
    out += j.dump() + "\n";
  }
  return out;
}

Outcome determinism(const fs::path& root) {
  SyntheticConfig sc;
  sc.n_clips = 60;
  sc.n_train = 36;
  sc.n_val = 12;
  sc.seed = 99;
  const auto clips = generate_am_clips(sc);
  const auto tr = synthetic_dataset(clips, Split::kTrain, 3), va = synthetic_dataset(clips, Split::kVal, 3);
  auto run = [&](const fs::path& dir) {
    RunConfig rc = synthetic_run_config(dir, 5);
    rc.train.max_epochs = 3;
    fs::remove_all(dir);
    write_run_header(rc, dir);
    TmnnModel<float> model(rc.model, rc.train.seed);
    TrainOptions opts;
    opts.output_dir = dir;
    return train(model, rc.train, tr, va, opts);
  };
  const auto a = run(root / "a");
  const auto b = run(root / "b");
  const bool ckpt = slurp(root / "a" / "best.ckpt") == slurp(root / "b" / "best.ckpt");
  const bool logs = log_without_wall_clock(root / "a" / "train_log.jsonl") ==
                    log_without_wall_clock(root / "b" / "train_log.jsonl");
  // config.txt echoes output_dir, the one intended difference.
  auto config_body = [&](const fs::path& dir) {
    std::istringstream in(slurp(dir / "config.txt"));
    std::string line, body;
    while (std::getline(in, line))
      if (line.rfind("output_dir", 0) != 0) body += line + "\n";
    return body;
  };
  const bool headers = config_body(root / "a") == config_body(root / "b") &&
                       slurp(root / "a" / "seed.txt") == slurp(root / "b" / "seed.txt");
  Outcome o;
  o.pass = ckpt && logs && headers && a.rng_state == b.rng_state;
  o.detail = std::string("checkpoints ") + (ckpt ? "identical" : "differ") + ", logs " + (logs ? "identical" : "differ") +
             " (wall_seconds excluded), run headers " + (headers ? "identical" : "differ");
  return o;
}

// ---------------------------------------------------------------------------
// 9. Scheduler conformance.

// Stalled loss from epoch 1 on: decay k lands on epoch 1 + k * patience,
// the switch on the decay numbered decays_before_sgd.
Outcome scheduler_conformance(const fs::path& root) {
  struct Case {
    std::size_t patience, decays_before_sgd;
  };
  const std::vector<Case> cases{{1, 2}, {2, 2}, {3, 1}, {3, 2}, {2, 3}};
  std::size_t mismatches = 0;
  std::string first;
  auto fail = [&](const std::string& msg) {
    if (mismatches++ == 0) first = msg;
  };
  for (const auto& c : cases) {
    const double lr0 = 1e-3, decay = 0.1;
    const std::size_t epochs = 1 + c.patience * (c.decays_before_sgd + 2);
    PlateauScheduler sched(lr0, c.patience, decay, c.decays_before_sgd);
    std::size_t decays = 0;
    for (std::size_t e = 1; e <= epochs; ++e) {
      const auto ev = sched.observe(1.0);
      const bool want_decay = e > 1 && (e - 1) % c.patience == 0;
      if (want_decay) ++decays;
      const bool want_switch = want_decay && decays == c.decays_before_sgd;
      if (ev.decayed != want_decay || ev.switched != want_switch || ev.epoch != e) {
        fail("p=" + std::to_string(c.patience) + " d=" + std::to_string(c.decays_before_sgd) + " epoch " +
             std::to_string(e));
      }
      const double want_lr = lr0 * std::pow(decay, static_cast<double>(decays));
      if (std::abs(sched.lr() - want_lr) > 1e-15 * lr0) fail("lr at epoch " + std::to_string(e));
    }
  }

  // The same schedule seen through train(): each record holds the lr and
  // optimizer used during that epoch.
  std::vector<AudioClip> audio(4);
  std::vector<std::vector<std::uint8_t>> labels;
  for (std::size_t i = 0; i < audio.size(); ++i) {
    audio[i].samples.assign(4000, 0.01f * static_cast<float>(i + 1));
    labels.push_back(i % 2 ? std::vector<std::uint8_t>{0, 1} : std::vector<std::uint8_t>{1, 0});
  }
  const auto data = Dataset::in_memory(audio, labels, 2);
  ModelConfig mc;
  mc.n_filters = 4;
  mc.n_mod_filters = 1;
  mc.n_classes = 2;
  mc.base_width = 2;
  TrainConfig tc = TrainConfig::defaults_for(Task::kKeyword);
  tc.crop_seconds = 0.25;
  tc.batch_size = 2;
  tc.plateau_patience = 2;
  tc.decays_before_sgd = 2;
  tc.adam_lr = 1e-3;
  tc.max_epochs = 8;
  TmnnModel<float> model(mc, 1);
  TrainOptions opts;
  opts.output_dir = root / "scheduler";
  opts.val_loss_override = [](std::size_t, double) { return 0.5; };
  const auto state = train(model, tc, data, data, opts);
  // Decays observed at the end of epochs 3 and 5; the second one switches.
  const std::vector<double> want_lr{1e-3, 1e-3, 1e-3, 1e-4, 1e-4, 1e-5, 1e-5, 1e-6};
  const std::vector<OptimizerKind> want_opt{OptimizerKind::kAdam, OptimizerKind::kAdam, OptimizerKind::kAdam,
                                            OptimizerKind::kAdam, OptimizerKind::kAdam, OptimizerKind::kSgd,
                                            OptimizerKind::kSgd, OptimizerKind::kSgd};
  for (std::size_t e = 0; e < state.history.size(); ++e) {
    if (std::abs(state.history[e].lr - want_lr[e]) > 1e-12 * want_lr[e] || state.history[e].optimizer != want_opt[e]) {
      fail("train() epoch " + std::to_string(e + 1));
    }
  }
  if (state.history.size() != 8) fail("train() ran " + std::to_string(state.history.size()) + " epochs");
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = std::to_string(cases.size()) + " (patience, decays) settings plus an 8-epoch train() run; " +
             (mismatches ? std::to_string(mismatches) + " mismatches, first: " + first : "all transitions on schedule");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string out = (fs::temp_directory_path() / "tmnn_acceptance").string();
  std::vector<int> only;
  std::uint64_t seed = 7;
  app.add_option("--out", out, "scratch directory for training runs");
  app.add_option("--only", only, "run a subset of criteria, e.g. --only 1,2")->delimiter(',');
  app.add_option("--seed", seed, "seed for the synthetic experiment");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(out);
  fs::create_directories(root);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << n << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << std::endl;
  };

  report(1, "finite-difference gradients", gradient_suite);
  report(2, "modulation oracle", modulation_oracle);
  report(3, "identity degeneracies", identity_degeneracies);
  report(4, "DSP contracts", dsp_contracts);
  report(5, "metric oracles", metric_oracles);

  SweepOutcome sweep;
  const fs::path sweep_dir = root / "sweep";
  if (wanted(6) || wanted(7)) {
    try {
      const auto data = make_synthetic(seed);
      const std::vector<std::size_t> ms = wanted(7) ? std::vector<std::size_t>{0, 1, 2, 4, 8}
                                                    : std::vector<std::size_t>{0, 2};
      fs::remove_all(sweep_dir);
      sweep.rows = run_sweep(synthetic_run_config(sweep_dir, seed), ms, data.train, data.val, data.test,
                             data.config.class_names());
    } catch (const std::exception& e) {
      std::cerr << "synthetic sweep failed: " << e.what() << '\n';
    }
  }
  report(6, "synthetic modulation discrimination", [&] { return synthetic_experiment(sweep); });
  report(7, "modulation filter sweep", [&] { return sweep_shape(sweep, sweep_dir / "sweep.csv"); });
  report(8, "determinism", [&] { return determinism(root / "determinism"); });
  report(9, "scheduler conformance", [&] { return scheduler_conformance(root); });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
