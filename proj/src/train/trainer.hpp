#pragma once

#include <functional>
#include <string>

#include "core/optim.hpp"
#include "model/checkpoint.hpp"
#include "model/model.hpp"
#include "train/rollout.hpp"
#include "world/world.hpp"

namespace seqnav {

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& s);

// Mixed imitation + A2C training: each optimizer step runs one teacher-forced
// rollout and one sampled rollout per episode in the batch and combines them
// as L_RL + lambda3 * L_IL.
class Trainer {
 public:
  Trainer(OristModel& model, const WorldSet& worlds, TrainConfig cfg);

  // Restores optimizer moments and epoch numbering from a checkpoint
  // produced by make_checkpoint.
  void restore(const Checkpoint& ckpt);
  Checkpoint make_checkpoint() const;

  // Runs epochs completed+1 .. cfg.epochs; emits one JSON log line per epoch.
  // Throws NumericError after 10 consecutive non-finite batches.
  void run(const std::function<void(const std::string&)>& on_epoch);

  // Greedy validation on a split; mode "r2r" distance success.
  MetricsReport validate(const std::string& split_name) const;

  int completed_epochs() const { return completed_epochs_; }
  const TrainConfig& config() const { return cfg_; }
  uint64_t grad_clip_events() const { return clip_events_; }
  uint64_t skipped_steps() const { return skipped_; }

 private:
  std::string trainer_state_json() const;

  OristModel& model_;
  const WorldSet& worlds_;
  TrainConfig cfg_;
  AdamW opt_;
  int completed_epochs_ = 0;
  uint64_t clip_events_ = 0;
  uint64_t skipped_ = 0;
};

}  // namespace seqnav
