#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rgan/adam.hpp"
#include "rgan/checkpoint.hpp"
#include "rgan/config.hpp"
#include "rgan/image.hpp"
#include "rgan/losses.hpp"
#include "rgan/models.hpp"
#include "rgan/sampler.hpp"

namespace rgan {

// The full cycle-consistent training engine: alternating discriminator and
// generator Adam updates, early stopping on the epoch-mean generator loss,
// and bit-exact checkpointing.

struct ModelSet {
  std::unique_ptr<GeneratorBase<float>> gen_h, gen_l;
  std::unique_ptr<Discriminator<float>> disc_h, disc_l;

  static ModelSet build(const TrainConfig& cfg);
  void initialize(uint64_t seed);
  std::vector<ParamStore<float>*> generator_stores();
  int64_t total_params() const;
};

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_total_g = 0;
  std::filesystem::path best_path, last_path, history_path;
  std::vector<LossReport> epoch_means;
};

// Stop once the epoch statistic has failed to improve its running minimum
// for `patience` consecutive epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Feeds one epoch value; returns true when training should stop.
  bool update(double value) {
    ++epoch_;
    if (value < best_) {
      best_ = value;
      best_epoch_ = epoch_;
      streak_ = 0;
      return false;
    }
    return ++streak_ >= patience_;
  }

  bool improved_last() const { return streak_ == 0 && epoch_ > 0; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

  void restore(double best, int best_epoch, int epoch) {
    best_ = best;
    best_epoch_ = best_epoch;
    epoch_ = epoch;
    streak_ = 0;
  }

 private:
  int patience_;
  int epoch_ = 0;
  int streak_ = 0;
  int best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

class Trainer {
 public:
  using LogFn = std::function<void(const std::string&)>;

  explicit Trainer(TrainConfig cfg, LogFn log = nullptr);

  // One alternating update on a batch of normalized [-1,1] images:
  // discriminators first (on detached fakes), then both generators jointly.
  LossReport train_iteration(const std::vector<Tensor<float>>& low,
                             const std::vector<Tensor<float>>& high);

  // Full run with early stopping; writes best.ckpt, last.ckpt and
  // history.txt under cfg.checkpoint_dir.
  TrainResult train(const std::optional<std::filesystem::path>& resume = {});

  ModelSet& models() { return models_; }
  const TrainConfig& config() const { return cfg_; }
  int epochs_completed() const { return epoch_done_; }
  int64_t steps_completed() const { return steps_; }

  // Canonical checkpoint tensor list: model parameters in enumeration order,
  // then adam.m.* / adam.v.*, then the reserved scalars.
  std::vector<NamedTensorF> snapshot() const;
  void restore(const std::vector<NamedTensorF>& tensors);

 private:
  void log(const std::string& s) const {
    if (log_) log_(s);
  }

  TrainConfig cfg_;
  LogFn log_;
  ModelSet models_;
  Adam<float> opt_g_, opt_d_h_, opt_d_l_;
  EarlyStopper stopper_;
  int epoch_done_ = 0;
  int64_t steps_ = 0;
};

// Architecture fields recovered from a checkpoint's reserved meta scalars.
TrainConfig config_from_checkpoint(const std::vector<NamedTensorF>& tensors);

// Rebuilds the low-to-high generator from a checkpoint.
std::unique_ptr<GeneratorBase<float>> load_generator_h(
    const std::vector<NamedTensorF>& tensors);

struct EnhanceResult {
  int written = 0;
  std::vector<std::string> skipped;  // per-image size/format failures
};

// Runs every PPM under `input` (file or directory) through the checkpoint's
// G_H and writes same-named PPMs into out_dir.
EnhanceResult enhance_images(const std::filesystem::path& ckpt_path,
                             const std::filesystem::path& input,
                             const std::filesystem::path& out_dir,
                             const Trainer::LogFn& log = nullptr);

// Tensor names, shapes, and per-model parameter totals of a checkpoint.
std::string inspect_checkpoint_text(const std::filesystem::path& path);

}  // namespace rgan
