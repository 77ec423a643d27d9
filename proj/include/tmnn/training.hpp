#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmnn/data_io.hpp"
#include "tmnn/dsp.hpp"
#include "tmnn/metrics.hpp"
#include "tmnn/model.hpp"

namespace tmnn {

enum class Task { kTagging, kKeyword };

std::string to_string(Task task);
Task parse_task(const std::string& text);

struct TrainConfig {
  Task task = Task::kTagging;
  double crop_seconds = 5.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 60;
  double adam_lr = 1e-4;
  std::size_t plateau_patience = 3;
  double lr_decay = 0.1;
  std::size_t decays_before_sgd = 2;
  double sgd_momentum = 0.9;
  std::uint64_t seed = 0;

  /// Task-specific crop length: 5 s for tagging, 1 s for keywords.
  static TrainConfig defaults_for(Task task);
  void validate() const;
  nlohmann::json to_json() const;
};

/// Raised when a loss or activation stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, double lr, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), lr(lr), epoch(epoch), batch(batch) {}
  double lr;
  std::size_t epoch;
  std::size_t batch;
};

/// Window of exactly `seconds` starting at a uniform random offset; clips
/// shorter than the window are right-padded with zeros.
AudioClip sample_crop(const AudioClip& clip, double seconds, std::mt19937_64& rng);

/// Consecutive non-overlapping windows covering the clip; the last one is
/// zero-padded. A clip shorter than one window yields a single padded crop.
std::vector<AudioClip> consecutive_crops(const AudioClip& clip, double seconds);

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Heavy-ball momentum: v = mu v + g; p -= lr v.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Tensor<T>> params, double lr, double momentum);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_, momentum_;
};

enum class OptimizerKind { kAdam, kSgd };
std::string to_string(OptimizerKind kind);

/// Validation-loss plateau rule. An improvement resets the stale counter;
/// `patience` stale epochs in a row multiply the lr by `decay`. Once
/// `decays_before_switch` decays have happened under Adam the optimizer
/// becomes SGD at the decayed lr, and the same rule keeps running.
class PlateauScheduler {
 public:
  struct Event {
    std::size_t epoch = 0;
    bool improved = false;
    bool decayed = false;
    bool switched = false;
  };

  PlateauScheduler(double lr, std::size_t patience, double decay, std::size_t decays_before_switch);

  Event observe(double val_loss);

  double lr() const { return lr_; }
  OptimizerKind optimizer() const { return kind_; }
  double best() const { return best_; }
  std::size_t decays() const { return decays_; }

 private:
  double lr_;
  std::size_t patience_;
  double decay_;
  std::size_t decays_before_switch_;
  double best_;
  std::size_t stale_ = 0;
  std::size_t decays_ = 0;
  std::size_t epoch_ = 0;
  OptimizerKind kind_ = OptimizerKind::kAdam;
};

/// Clips with binary label vectors; audio is fetched on demand.
struct Dataset {
  std::size_t n_classes = 0;
  std::vector<std::vector<std::uint8_t>> labels;
  std::vector<std::string> names;
  std::function<AudioClip(std::size_t)> audio;

  std::size_t size() const { return labels.size(); }

  static Dataset in_memory(std::vector<AudioClip> clips, std::vector<std::vector<std::uint8_t>> labels,
                           std::size_t n_classes);
  /// Reads 16 kHz WAVs; relative clip paths are taken from `base_dir`.
  static Dataset from_clips(const std::vector<TaggedClip>& clips, std::size_t n_classes,
                            const std::filesystem::path& base_dir);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainState {
  std::size_t epoch = 0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::filesystem::path best_checkpoint_path;
  OptimizerKind current_optimizer = OptimizerKind::kAdam;
  double lr = 0.0;
  std::string rng_state;
  std::vector<EpochRecord> history;
};

struct TrainOptions {
  std::filesystem::path output_dir;  // holds train_log.jsonl and best.ckpt
  bool verbose = false;
  /// Test seam: replaces the measured validation loss before scheduling.
  std::function<double(std::size_t epoch, double measured)> val_loss_override;
};

/// Fits `model` in place. On return the model holds the final weights and the
/// best-validation weights are in state.best_checkpoint_path.
TrainState train(TmnnModel<float>& model, const TrainConfig& config, const Dataset& train_set,
                 const Dataset& val_set, const TrainOptions& options);

/// Mean loss over consecutive crops of every clip (inference mode).
double validation_loss(TmnnModel<float>& model, const TrainConfig& config, const Dataset& data);

/// [N x K] clip scores: sigmoid (tagging) or softmax (keyword) outputs
/// averaged over consecutive crops.
std::vector<double> predict(TmnnModel<float>& model, const TrainConfig& config, const Dataset& data);

EvalReport evaluate(TmnnModel<float>& model, const TrainConfig& config, const Dataset& data,
                    const std::vector<std::string>& class_names);

}  // namespace tmnn
