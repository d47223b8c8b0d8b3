#pragma once

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ulmv/checkpoint.hpp"
#include "ulmv/data.hpp"
#include "ulmv/eval.hpp"
#include "ulmv/model.hpp"
#include "ulmv/objective.hpp"
#include "ulmv/optim.hpp"

namespace ulmv {

struct LRGroups {
  double default_max_lr = 1e-3;
  // View name -> max learning rate for that view's encoder parameters
  // (mirrors the split between feature extractors and the rest).
  std::map<std::string, double> per_view_encoder;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  uint64_t seed = 0;
  double view_dropout = 0.5;
  bool disable_view_dropout = false;
  std::optional<std::vector<int>> view_subset;  // train_view_specific restriction
  LRGroups lr;
  OneCycleShape schedule;
  AdamWConfig<float> adamw;
  ModelConfig model;
  std::string selection_metric = "ap";
  double augment_noise_std = 0.0;  // additive noise on image inputs during training

  void validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(view_dropout >= 0.0 && view_dropout < 1.0))
      throw ConfigError("train: view_dropout must be in [0,1)");
    if (augment_noise_std < 0) throw ConfigError("train: augment_noise_std must be >= 0");
    if (selection_metric != "ap" && selection_metric != "roc")
      throw ConfigError("train: selection_metric must be 'ap' or 'roc'");
    schedule.validate();
  }
};

// Independently zeroes every available slot with probability p, per
// (patient, view, timepoint); already-missing slots stay 0.
std::vector<MaskGrid> apply_view_dropout(const std::vector<MaskGrid>& available, double p,
                                         std::mt19937_64& rng);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_metric = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val = 0;
  bool diverged = false;
};

// Minibatch training of the full pipeline with one-cycle AdamW, per-epoch
// validation, and best-checkpoint selection. All randomness (init, batch
// order, dropout, augmentation) derives from (seed, epoch, batch), so runs
// are bit-reproducible and checkpoints resume exactly.
class Trainer {
 public:
  Trainer(const Dataset& ds, TrainConfig cfg);

  TrainResult run();

  // Fine-grained control for tests and resume paths.
  void train_steps(int n);
  double last_loss() const { return last_loss_; }
  Checkpoint snapshot() const;
  void restore(const Checkpoint& ckpt);
  double validation_metric();
  UnifiedModel<float>& model() { return *model_; }
  int64_t global_step() const { return global_step_; }
  int64_t total_steps() const { return total_steps_; }

  // Effective availability for one patient (observation present, view inside
  // the configured subset).
  MaskGrid effective_availability(int patient_index) const;

 private:
  const Dataset& ds_;
  TrainConfig cfg_;
  std::unique_ptr<UnifiedModel<float>> model_;
  std::unique_ptr<AdamW<float>> opt_;
  std::vector<double> max_lr_;  // per parameter
  std::vector<double> class_weights_;
  std::vector<int> train_idx_;
  int64_t steps_per_epoch_ = 0;
  int64_t total_steps_ = 0;
  int64_t global_step_ = 0;
  double last_loss_ = 0;

  std::vector<int> epoch_order(int64_t epoch) const;
  void one_step(int64_t step);
  double batch_step(const std::vector<int>& patients, const std::vector<MaskGrid>& masks,
                    std::mt19937_64& aug_rng);
};

// Same loop restricted to a view subset with view dropout disabled.
TrainResult train_view_specific(const Dataset& ds, const std::vector<int>& view_subset,
                                TrainConfig cfg);

}  // namespace ulmv
