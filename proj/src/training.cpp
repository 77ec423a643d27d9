#include "tmnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "tmnn/ops.hpp"

namespace tmnn {

std::string to_string(Task task) { return task == Task::kKeyword ? "keyword" : "tagging"; }

Task parse_task(const std::string& text) {
  if (text == "tagging") return Task::kTagging;
  if (text == "keyword") return Task::kKeyword;
  throw std::invalid_argument("unknown task '" + text + "' (expected tagging or keyword)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

TrainConfig TrainConfig::defaults_for(Task task) {
  TrainConfig c;
  c.task = task;
  c.crop_seconds = task == Task::kKeyword ? 1.0 : 5.0;
  return c;
}

void TrainConfig::validate() const {
  if (!(crop_seconds * kSampleRate >= static_cast<double>(kFftSize))) {
    throw std::invalid_argument("crop_seconds is shorter than one analysis window");
  }
  if (!(adam_lr > 0.0) || !(lr_decay > 0.0) || !std::isfinite(adam_lr)) {
    throw std::invalid_argument("learning rate and decay must be positive");
  }
  if (batch_size == 0 || max_epochs == 0 || plateau_patience == 0) {
    throw std::invalid_argument("batch_size, max_epochs and plateau_patience must be positive");
  }
  if (sgd_momentum < 0.0 || sgd_momentum >= 1.0) throw std::invalid_argument("sgd_momentum must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"task", to_string(task)},
          {"crop_seconds", crop_seconds},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"adam_lr", adam_lr},
          {"plateau_patience", plateau_patience},
          {"lr_decay", lr_decay},
          {"decays_before_sgd", decays_before_sgd},
          {"sgd_momentum", sgd_momentum},
          {"seed", seed}};
}

namespace {

std::size_t crop_samples(double seconds) { return static_cast<std::size_t>(std::llround(seconds * kSampleRate)); }

}  // namespace

AudioClip sample_crop(const AudioClip& clip, double seconds, std::mt19937_64& rng) {
  const std::size_t n = crop_samples(seconds);
  AudioClip out{std::vector<float>(n, 0.0f), clip.sample_rate};
  std::size_t offset = 0;
  if (clip.samples.size() > n) {
    std::uniform_int_distribution<std::size_t> dist(0, clip.samples.size() - n);
    offset = dist(rng);
  }
  const std::size_t count = std::min(n, clip.samples.size() - offset);
  std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(offset), count, out.samples.begin());
  return out;
}

std::vector<AudioClip> consecutive_crops(const AudioClip& clip, double seconds) {
  const std::size_t n = crop_samples(seconds);
  std::vector<AudioClip> crops;
  std::size_t start = 0;
  do {
    AudioClip c{std::vector<float>(n, 0.0f), clip.sample_rate};
    const std::size_t count = std::min(n, clip.samples.size() - start);
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(start), count, c.samples.begin());
    crops.push_back(std::move(c));
    start += n;
  } while (start < clip.samples.size());
  return crops;
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      w[j] = static_cast<T>(w[j] - lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
Sgd<T>::Sgd(std::vector<Tensor<T>> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

template <typename T>
void Sgd<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    auto& vel = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      vel[j] = momentum_ * vel[j] + static_cast<double>(g[j]);
      w[j] = static_cast<T>(w[j] - lr_ * vel[j]);
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;
template class Sgd<float>;
template class Sgd<double>;

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double decay, std::size_t decays_before_switch)
    : lr_(lr),
      patience_(patience),
      decay_(decay),
      decays_before_switch_(decays_before_switch),
      best_(std::numeric_limits<double>::infinity()) {}

PlateauScheduler::Event PlateauScheduler::observe(double val_loss) {
  Event ev;
  ev.epoch = ++epoch_;
  if (val_loss < best_) {
    best_ = val_loss;
    stale_ = 0;
    ev.improved = true;
    return ev;
  }
  if (++stale_ < patience_) return ev;
  stale_ = 0;
  lr_ *= decay_;
  ++decays_;
  ev.decayed = true;
  if (kind_ == OptimizerKind::kAdam && decays_ >= decays_before_switch_) {
    kind_ = OptimizerKind::kSgd;
    ev.switched = true;
  }
  return ev;
}

Dataset Dataset::in_memory(std::vector<AudioClip> clips, std::vector<std::vector<std::uint8_t>> labels,
                           std::size_t n_classes) {
  if (clips.size() != labels.size()) throw std::invalid_argument("clip and label counts differ");
  Dataset d;
  d.n_classes = n_classes;
  d.labels = std::move(labels);
  for (std::size_t i = 0; i < clips.size(); ++i) d.names.push_back("clip" + std::to_string(i));
  auto shared = std::make_shared<std::vector<AudioClip>>(std::move(clips));
  d.audio = [shared](std::size_t i) { return (*shared)[i]; };
  return d;
}

Dataset Dataset::from_clips(const std::vector<TaggedClip>& clips, std::size_t n_classes,
                            const std::filesystem::path& base_dir) {
  Dataset d;
  d.n_classes = n_classes;
  std::vector<std::filesystem::path> paths;
  for (const auto& c : clips) {
    d.labels.push_back(c.labels);
    d.names.push_back(c.path);
    const std::filesystem::path p(c.path);
    paths.push_back(p.is_absolute() ? p : base_dir / p);
  }
  d.audio = [paths = std::move(paths)](std::size_t i) { return load_audio_16k(paths[i]); };
  return d;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"val_loss", val_loss},
          {"lr", lr},
          {"optimizer", to_string(optimizer)},
          {"wall_seconds", wall_seconds}};
}

namespace {

struct Batch {
  std::vector<Spectrogram> specs;
  std::vector<std::uint8_t> targets;  // row-major [B x K]
  std::vector<int> classes;
};

void append_example(Batch& batch, const AudioClip& crop, const std::vector<std::uint8_t>& labels, Task task) {
  batch.specs.push_back(stft_power(crop));
  batch.targets.insert(batch.targets.end(), labels.begin(), labels.end());
  if (task == Task::kKeyword) {
    auto it = std::find(labels.begin(), labels.end(), std::uint8_t{1});
    if (it == labels.end()) throw DataError("keyword clip without a class");
    batch.classes.push_back(static_cast<int>(it - labels.begin()));
  }
}

Tensor<float> batch_loss(Graph<float>& g, const Tensor<float>& logits, const Batch& batch, Task task,
                         std::size_t n_classes) {
  if (task == Task::kKeyword) return ops::cross_entropy(g, logits, std::span<const int>(batch.classes));
  std::vector<float> t(batch.targets.begin(), batch.targets.end());
  Tensor<float> targets(Shape{batch.specs.size(), n_classes}, std::move(t));
  return ops::bce_with_logits(g, logits, targets);
}

// Runs `fn(batch, clip_of_row)` over every consecutive crop of every clip.
template <typename Fn>
void for_each_eval_batch(const TrainConfig& config, const Dataset& data, Fn&& fn) {
  Batch batch;
  std::vector<std::size_t> owners;
  auto flush = [&]() {
    if (batch.specs.empty()) return;
    fn(batch, owners);
    batch = Batch{};
    owners.clear();
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const auto& crop : consecutive_crops(data.audio(i), config.crop_seconds)) {
      append_example(batch, crop, data.labels[i], config.task);
      owners.push_back(i);
      if (batch.specs.size() == config.batch_size) flush();
    }
  }
  flush();
}

void write_log_line(std::ofstream& log, const EpochRecord& rec) {
  log << rec.to_json().dump() << '\n';
  log.flush();
}

}  // namespace

double validation_loss(TmnnModel<float>& model, const TrainConfig& config, const Dataset& data) {
  double total = 0.0;
  std::size_t rows = 0;
  for_each_eval_batch(config, data, [&](const Batch& batch, const std::vector<std::size_t>&) {
    Graph<float> g(false);
    auto logits = model.forward(g, batch.specs, false);
    auto loss = batch_loss(g, logits, batch, config.task, data.n_classes);
    total += static_cast<double>(loss.item()) * static_cast<double>(batch.specs.size());
    rows += batch.specs.size();
  });
  return total / static_cast<double>(rows);
}

std::vector<double> predict(TmnnModel<float>& model, const TrainConfig& config, const Dataset& data) {
  const std::size_t k = data.n_classes;
  std::vector<double> scores(data.size() * k, 0.0);
  std::vector<std::size_t> crops(data.size(), 0);
  for_each_eval_batch(config, data, [&](const Batch& batch, const std::vector<std::size_t>& owners) {
    Graph<float> g(false);
    auto logits = model.forward(g, batch.specs, false);
    std::vector<float> probs;
    if (config.task == Task::kKeyword) {
      probs = ops::softmax_rows(logits);
    } else {
      auto v = logits.data();
      probs.resize(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) probs[i] = 1.0f / (1.0f + std::exp(-v[i]));
    }
    for (std::size_t r = 0; r < owners.size(); ++r) {
      for (std::size_t c = 0; c < k; ++c) scores[owners[r] * k + c] += probs[r * k + c];
      ++crops[owners[r]];
    }
  });
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) scores[i * k + c] /= static_cast<double>(crops[i]);
  }
  return scores;
}

EvalReport evaluate(TmnnModel<float>& model, const TrainConfig& config, const Dataset& data,
                    const std::vector<std::string>& class_names) {
  const auto scores = predict(model, config, data);
  std::vector<std::uint8_t> labels;
  for (const auto& row : data.labels) labels.insert(labels.end(), row.begin(), row.end());
  const auto kind = config.task == Task::kKeyword ? ReportKind::kKeyword : ReportKind::kTagging;
  return build_report(kind, class_names, scores, labels, data.size());
}

TrainState train(TmnnModel<float>& model, const TrainConfig& config, const Dataset& train_set,
                 const Dataset& val_set, const TrainOptions& options) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw DataError("training and validation sets must be nonempty");
  if (train_set.n_classes != model.config().n_classes || val_set.n_classes != model.config().n_classes) {
    throw std::invalid_argument("dataset class count does not match the model");
  }
  std::filesystem::create_directories(options.output_dir);
  std::ofstream log(options.output_dir / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot write training log in " + options.output_dir.string());

  std::mt19937_64 rng(config.seed);
  PlateauScheduler scheduler(config.adam_lr, config.plateau_patience, config.lr_decay, config.decays_before_sgd);
  std::optional<Adam<float>> adam(std::in_place, model.trainable(), config.adam_lr);
  std::optional<Sgd<float>> sgd;

  TrainState state;
  state.best_val_loss = std::numeric_limits<double>::infinity();
  state.best_checkpoint_path = options.output_dir / "best.ckpt";

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = scheduler.lr();
    const OptimizerKind kind = scheduler.optimizer();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      Batch batch;
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        append_example(batch, sample_crop(train_set.audio(idx), config.crop_seconds, rng), train_set.labels[idx],
                       config.task);
      }
      try {
        Graph<float> g;
        auto logits = model.forward(g, batch.specs, true);
        auto loss = batch_loss(g, logits, batch, config.task, train_set.n_classes);
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericalError("non-finite loss");
        g.backward(loss);
        if (kind == OptimizerKind::kAdam) {
          adam->step();
          adam->zero_grad();
        } else {
          sgd->step();
          sgd->zero_grad();
        }
        for (const auto& p : model.trainable()) {
          for (float w : p.data()) {
            if (!std::isfinite(w)) throw NumericalError("non-finite parameter after update");
          }
        }
        loss_sum += value * static_cast<double>(end - start);
        seen += end - start;
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << batch_index << ", lr " << lr << ": "
            << e.what();
        throw TrainingDiverged(msg.str(), lr, epoch, batch_index);
      }
    }

    double val = validation_loss(model, config, val_set);
    if (!std::isfinite(val)) {
      throw TrainingDiverged("validation loss is not finite at epoch " + std::to_string(epoch), lr, epoch, 0);
    }
    if (options.val_loss_override) val = options.val_loss_override(epoch, val);

    const auto event = scheduler.observe(val);
    if (event.improved) {
      state.best_val_loss = val;
      state.best_epoch = epoch;
      auto file = model.to_file();
      file.meta()["epoch"] = epoch;
      file.meta()["val_loss"] = val;
      file.meta()["train"] = config.to_json();
      file.save(state.best_checkpoint_path);
    }
    if (event.decayed) {
      if (adam) adam->set_lr(scheduler.lr());
      if (sgd) sgd->set_lr(scheduler.lr());
    }
    if (event.switched) {
      adam.reset();
      sgd.emplace(model.trainable(), scheduler.lr(), config.sgd_momentum);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = val;
    rec.lr = lr;
    rec.optimizer = kind;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_log_line(log, rec);
    if (options.verbose) std::cerr << rec.to_json().dump() << '\n';
    state.history.push_back(rec);
    state.epoch = epoch;
  }
  state.current_optimizer = scheduler.optimizer();
  state.lr = scheduler.lr();
  std::ostringstream rng_text;
  rng_text << rng;
  state.rng_state = rng_text.str();
  return state;
}

}  // namespace tmnn
