#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"
#include "world/world.hpp"

namespace seqnav {

struct TrainConfig {
  float lambda1 = 0.2f;  // next-step room loss weight
  float lambda2 = 0.2f;  // goal room loss weight
  float lambda3 = 0.2f;  // IL weight inside the total loss
  float lr = 1e-3f;
  float gamma = 0.9f;  // discount
  int max_steps = 8;
  int batch_size = 4;
  int epochs = 3;
  uint64_t seed = 1;
  float success_threshold_m = 3.0f;
  float step_reward = 1.0f;
  float terminal_reward = 2.0f;
  float grad_clip = 5.0f;
  float weight_decay = 0.01f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float entropy_weight = 0.0f;  // optional A2C entropy bonus, off by default
  bool use_direction_loss = true;
  std::string val_split = "val_seen";

  void validate() const;
};

// Shaped navigation reward: +-step_reward by the sign of the distance
// reduction while moving; +-terminal_reward by the success threshold at the
// final step.
float reward(double dist_before, double dist_after, bool terminal, const TrainConfig& cfg);

struct ILStep {
  HeadOutputs out;
  Observation obs;
};

struct ILRollout {
  std::vector<ILStep> steps;
};

struct ILLoss {
  Tensor total;
  // Component values for logging.
  float action = 0, direction = 0, room_next = 0, room_goal = 0, progress = 0;
  int correct_actions = 0;
  int steps = 0;
};

// Teacher-forced rollout: the agent executes the shortest-path action at
// every step, ending with STOP at the goal.
ILRollout teacher_rollout(const OristModel& model, const House& house, const Episode& episode,
                          const TrainConfig& cfg);
ILLoss imitation_loss(const ILRollout& rollout, const TrainConfig& cfg);

struct RLStep {
  Tensor neg_log_prob;  // -log p of the sampled action, graph-connected
  Tensor action_probs;  // softmax over candidates
  Tensor value;         // Z_t
  float reward = 0;
  int action = 0;
  float action_prob = 0;
};

struct RolloutRecord {
  std::vector<RLStep> steps;
  bool stopped = false;  // STOP chosen (as opposed to hitting max_steps)
  std::vector<int> visited;
};

// Actions drawn from softmax(action logits) each step.
RolloutRecord sampled_rollout(const OristModel& model, const House& house,
                              const Episode& episode, const TrainConfig& cfg, RngStream& rng);

struct A2CLoss {
  Tensor policy;
  Tensor value;
  Tensor total;  // policy + value (+ entropy bonus when enabled)
  std::vector<float> returns;
  std::vector<float> advantages;
};

// Discounted returns with the advantage (R_t - Z_t) treated as a constant in
// the policy term; the squared residual trains the value head. Passing
// frozen_advantages pins the advantages instead of recomputing them, which
// keeps the loss a pure function of the parameters for gradient checks.
A2CLoss a2c_loss(const RolloutRecord& rollout, float gamma, const TrainConfig& cfg,
                 const std::vector<float>* frozen_advantages = nullptr);

// L = L_RL + lambda3 * L_IL.
Tensor total_loss(const Tensor& rl, const Tensor& il, float lambda3);

// Greedy argmax rollout for evaluation; runs without recording gradients.
TrajectoryRecord greedy_rollout(const OristModel& model, const House& house,
                                const Episode& episode, int max_steps, const std::string& mode);

}  // namespace seqnav
