#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tmnn/training.hpp"

using namespace tmnn;

namespace {

// Asymptotic Kolmogorov distribution tail with the usual small-n correction.
double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k < 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

AudioClip tone(double hz, double seconds, double phase = 0.0) {
  AudioClip c;
  c.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    c.samples[i] = static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0 + phase));
  return c;
}

std::pair<Dataset, Dataset> toy_sets(std::size_t n_per_class) {
  std::vector<AudioClip> tr, va;
  std::vector<std::vector<std::uint8_t>> ltr, lva;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double hz = c == 0 ? 400.0 + 20.0 * i : 3000.0 + 20.0 * i;
      tr.push_back(tone(hz, 0.25, 0.1 * i));
      ltr.push_back(c == 0 ? std::vector<std::uint8_t>{1, 0} : std::vector<std::uint8_t>{0, 1});
      va.push_back(tone(hz + 10.0, 0.25, 0.2 * i));
      lva.push_back(ltr.back());
    }
  }
  return {Dataset::in_memory(tr, ltr, 2), Dataset::in_memory(va, lva, 2)};
}

ModelConfig toy_model() {
  ModelConfig m;
  m.n_filters = 8;
  m.n_mod_filters = 1;
  m.n_classes = 2;
  m.base_width = 2;
  return m;
}

TrainConfig toy_train(std::size_t epochs) {
  TrainConfig t = TrainConfig::defaults_for(Task::kKeyword);
  t.crop_seconds = 0.25;
  t.batch_size = 4;
  t.max_epochs = epochs;
  t.adam_lr = 1e-3;
  t.seed = 11;
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string strip_wall_seconds(const std::string& log) {
  std::istringstream in(log);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("wall_seconds");
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("crop examples") {
  std::mt19937_64 rng(1);
  auto five = tone(100, 5.0);
  for (int i = 0; i < 20; ++i) CHECK(sample_crop(five, 5.0, rng).samples == five.samples);

  auto half = tone(100, 0.5);
  auto padded = sample_crop(half, 1.0, rng);
  REQUIRE(padded.samples.size() == 16000);
  CHECK(std::equal(half.samples.begin(), half.samples.end(), padded.samples.begin()));
  CHECK(std::all_of(padded.samples.begin() + 8000, padded.samples.end(), [](float v) { return v == 0.0f; }));

  auto crops = consecutive_crops(tone(100, 12.0), 5.0);
  CHECK(crops.size() == 3);
  CHECK(std::all_of(crops[2].samples.begin() + 2 * 16000, crops[2].samples.end(), [](float v) { return v == 0.0f; }));
  CHECK(consecutive_crops(half, 1.0).size() == 1);
}

TEST_CASE("crop offsets are uniform") {
  // Index-ramp clip so the first sample of a crop reveals its offset.
  AudioClip ramp;
  ramp.samples.resize(29 * 16000);
  for (std::size_t i = 0; i < ramp.samples.size(); ++i) ramp.samples[i] = static_cast<float>(i);
  std::mt19937_64 rng(2024);
  const double max_offset = static_cast<double>(ramp.samples.size() - 5 * 16000);
  std::vector<double> u;
  for (int i = 0; i < 10000; ++i) u.push_back(sample_crop(ramp, 5.0, rng).samples[0] / max_offset);
  std::sort(u.begin(), u.end());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double n = static_cast<double>(u.size());
    d = std::max({d, std::abs((i + 1) / n - u[i]), std::abs(u[i] - i / n)});
  }
  CHECK(ks_p_value(d, u.size()) > 0.01);
  CHECK(u.front() >= 0.0);
  CHECK(u.back() <= 1.0);
}

TEST_CASE("adam and sgd follow their closed forms") {
  // Constant gradient: bias-corrected Adam moves exactly lr * g / (|g| + eps) per step.
  Tensor<double> x(Shape{1}, 3.0);
  x.set_requires_grad(true);
  Adam<double> adam({x}, 0.01);
  for (int t = 1; t <= 50; ++t) {
    x.ensure_grad()[0] = 2.0;
    adam.step();
    adam.zero_grad();
    CHECK(std::abs(x.data()[0] - (3.0 - t * 0.01 * 2.0 / (2.0 + 1e-8))) < 1e-6);
  }

  // Quadratic f = a/2 (x - b)^2 against the textbook Adam recurrence.
  const double a = 1.5, b = -0.7, lr = 0.05;
  Tensor<double> y(Shape{1}, 2.0);
  y.set_requires_grad(true);
  Adam<double> adam2({y}, lr);
  double ref = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 200; ++t) {
    const double g = a * (ref - b);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    y.ensure_grad()[0] = a * (y.data()[0] - b);
    adam2.step();
    adam2.zero_grad();
    CHECK(std::abs(y.data()[0] - ref) < 1e-6);
  }

  // Heavy-ball on the quadratic: (e, v) evolves by a fixed 2x2 matrix.
  const double mu = 0.9, eta = 0.1;
  Tensor<double> z(Shape{1}, 1.0);
  z.set_requires_grad(true);
  Sgd<double> sgd({z}, eta, mu);
  // Powers of [[1 - eta a, -eta mu], [a, mu]] applied to (e0, 0).
  double p00 = 1, p01 = 0, p10 = 0, p11 = 1;
  const double m00 = 1 - eta * a, m01 = -eta * mu, m10 = a, m11 = mu;
  for (int t = 1; t <= 100; ++t) {
    z.ensure_grad()[0] = a * (z.data()[0] - b);
    sgd.step();
    sgd.zero_grad();
    const double n00 = m00 * p00 + m01 * p10, n01 = m00 * p01 + m01 * p11;
    const double n10 = m10 * p00 + m11 * p10, n11 = m10 * p01 + m11 * p11;
    p00 = n00, p01 = n01, p10 = n10, p11 = n11;
    CHECK(std::abs(z.data()[0] - (b + p00 * (1.0 - b))) < 1e-6);
  }
}

TEST_CASE("plateau scheduler") {
  PlateauScheduler s(1e-4, 1, 0.1, 2);
  auto e1 = s.observe(1.0);
  CHECK(e1.improved);
  auto e2 = s.observe(1.0);
  CHECK(e2.decayed);
  CHECK_FALSE(e2.switched);
  CHECK(s.lr() == doctest::Approx(1e-5));
  auto e3 = s.observe(1.0);
  CHECK(e3.decayed);
  CHECK(e3.switched);
  CHECK(s.optimizer() == OptimizerKind::kSgd);
  CHECK(s.lr() == doctest::Approx(1e-6));

  PlateauScheduler p3(1.0, 3, 0.5, 2);
  for (double v : {3.0, 2.0, 2.5, 2.5}) CHECK_FALSE(p3.observe(v).decayed);
  CHECK(p3.observe(2.1).decayed);
  CHECK(p3.observe(1.0).improved);
  CHECK(p3.best() == 1.0);
}

TEST_CASE("config validation") {
  auto c = TrainConfig::defaults_for(Task::kTagging);
  CHECK(c.crop_seconds == 5.0);
  CHECK(TrainConfig::defaults_for(Task::kKeyword).crop_seconds == 1.0);
  c.crop_seconds = 0.01;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.adam_lr = 0.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("toy training lowers validation loss and is reproducible") {
  auto [tr, va] = toy_sets(6);
  const auto dir = std::filesystem::temp_directory_path() / "tmnn_toy";
  std::filesystem::remove_all(dir);
  TmnnModel<float> m1(toy_model(), 3);
  auto s1 = train(m1, toy_train(5), tr, va, {dir / "a"});
  REQUIRE(s1.history.size() == 5);
  for (std::size_t i = 1; i < 5; ++i) CHECK(s1.history[i].val_loss < s1.history[i - 1].val_loss);
  CHECK(s1.best_epoch == 5);
  CHECK(std::filesystem::exists(s1.best_checkpoint_path));
  auto best = TensorFile::load(s1.best_checkpoint_path);
  CHECK(best.meta()["val_loss"].get<double>() == doctest::Approx(s1.best_val_loss));

  TmnnModel<float> m2(toy_model(), 3);
  auto s2 = train(m2, toy_train(5), tr, va, {dir / "b"});
  CHECK(slurp(dir / "a" / "best.ckpt") == slurp(dir / "b" / "best.ckpt"));
  CHECK(strip_wall_seconds(slurp(dir / "a" / "train_log.jsonl")) == strip_wall_seconds(slurp(dir / "b" / "train_log.jsonl")));
  CHECK(s1.rng_state == s2.rng_state);

  auto report = evaluate(m1, toy_train(5), va, {"low", "high"});
  CHECK(report.accuracy.has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("model selection keeps the minimum validation loss") {
  auto [tr, va] = toy_sets(2);
  const auto dir = std::filesystem::temp_directory_path() / "tmnn_select";
  TmnnModel<float> m(toy_model(), 4);
  const std::vector<double> fake{0.9, 0.5, 0.7, 0.4, 0.6, 0.8};
  TrainOptions opts{dir};
  opts.val_loss_override = [&](std::size_t epoch, double) { return fake[epoch - 1]; };
  auto s = train(m, toy_train(6), tr, va, opts);
  CHECK(s.best_epoch == 4);
  CHECK(TensorFile::load(s.best_checkpoint_path).meta()["epoch"] == 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  AudioClip loud;
  loud.samples.assign(4000, 1e30f);
  auto bad = Dataset::in_memory({loud, loud}, {{1, 0}, {0, 1}}, 2);
  TmnnModel<float> m(toy_model(), 5);
  const auto dir = std::filesystem::temp_directory_path() / "tmnn_nan";
  try {
    train(m, toy_train(2), bad, bad, {dir});
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch == 1);
    CHECK(e.batch == 0);
    CHECK(e.lr == doctest::Approx(1e-3));
  }
  std::filesystem::remove_all(dir);
}
