#include "train/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqnav {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (lambda1 <= 0 || lambda2 <= 0 || lambda3 <= 0) fail("lambda weights must be positive");
  if (gamma <= 0.0f || gamma > 1.0f) fail("gamma must be in (0, 1]");
  if (max_steps < 1) fail("max_steps must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (lr < 0) fail("learning rate must be >= 0");
  if (success_threshold_m <= 0) fail("success threshold must be positive");
  if (grad_clip <= 0) fail("grad_clip must be positive");
}

float reward(double dist_before, double dist_after, bool terminal, const TrainConfig& cfg) {
  if (terminal) {
    return dist_after < cfg.success_threshold_m ? cfg.terminal_reward : -cfg.terminal_reward;
  }
  return (dist_before - dist_after) > 0.0 ? cfg.step_reward : -cfg.step_reward;
}

namespace {

// One rollout loop shared by the teacher-forced, sampled and greedy modes.
// pick_action receives the head outputs and returns the candidate index.
template <typename PickFn, typename RecordFn>
void run_rollout(const OristModel& model, const House& house, const Episode& episode,
                 int max_steps, PickFn pick_action, RecordFn record) {
  StepState state = model.initial_state();
  AgentState agent{episode.start, episode.start_heading};
  for (int t = 0; t < max_steps; ++t) {
    const Observation obs = observe(house, episode, agent);
    EncodedStep enc = model.encode_step(episode.instruction, house, obs, state);
    HeadOutputs out = model.heads(enc);
    const int action = pick_action(out, obs, t);
    const bool is_stop = obs.candidates[action].is_stop;
    const bool terminal = is_stop || t == max_steps - 1;
    const AgentState next_agent = apply_action(house, agent, obs.candidates[action]);
    record(obs, std::move(out), action, next_agent, terminal);
    if (terminal) break;
    agent = next_agent;
    state = model.config().temporal_context ? enc.next_state : model.initial_state();
  }
}

int sample_index(const Tensor& probs, RngStream& rng) {
  const auto v = probs.values();
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(v.size()) - 1;
}

int argmax_index(std::span<const float> v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

ILRollout teacher_rollout(const OristModel& model, const House& house, const Episode& episode,
                          const TrainConfig& cfg) {
  ILRollout rollout;
  run_rollout(
      model, house, episode, cfg.max_steps,
      [](const HeadOutputs&, const Observation& obs, int) { return obs.teacher_action; },
      [&](const Observation& obs, HeadOutputs out, int, const AgentState&, bool) {
        rollout.steps.push_back({std::move(out), obs});
      });
  return rollout;
}

ILLoss imitation_loss(const ILRollout& rollout, const TrainConfig& cfg) {
  if (rollout.steps.empty()) throw std::invalid_argument("imitation_loss: empty rollout");
  ILLoss loss;
  Tensor total = Tensor::scalar(0.0f);
  for (const ILStep& step : rollout.steps) {
    const Observation& obs = step.obs;
    const int g = static_cast<int>(obs.candidates.size());
    if (obs.teacher_action < 0 || obs.teacher_action >= g) {
      throw std::invalid_argument("imitation_loss: teacher action out of range");
    }
    Tensor l_action = cross_entropy(step.out.action_logits, obs.teacher_action);
    std::vector<int> dir_labels(g);
    for (int i = 0; i < g; ++i) dir_labels[i] = static_cast<int>(obs.candidates[i].dir_bin);
    Tensor l_room_next = cross_entropy(step.out.room_next_logits, obs.next_room);
    Tensor l_room_goal = cross_entropy(step.out.room_goal_logits, obs.goal_room);
    Tensor l_progress = binary_cross_entropy(step.out.progress, obs.teacher_progress);

    Tensor step_loss = add(l_action, add(scale(l_room_next, cfg.lambda1),
                                         add(scale(l_room_goal, cfg.lambda2), l_progress)));
    if (cfg.use_direction_loss) {
      Tensor l_dir = cross_entropy_rows(step.out.direction_logits, dir_labels);
      step_loss = add(step_loss, l_dir);
      loss.direction += l_dir.item();
    }
    total = add(total, step_loss);

    loss.action += l_action.item();
    loss.room_next += l_room_next.item();
    loss.room_goal += l_room_goal.item();
    loss.progress += l_progress.item();
    if (argmax_index(step.out.action_logits.values()) == obs.teacher_action) {
      ++loss.correct_actions;
    }
    ++loss.steps;
  }
  loss.total = total;
  return loss;
}

RolloutRecord sampled_rollout(const OristModel& model, const House& house,
                              const Episode& episode, const TrainConfig& cfg, RngStream& rng) {
  RolloutRecord rollout;
  rollout.visited.push_back(episode.start);
  double dist_before = shortest_distance(house, episode.start, episode.goal);
  run_rollout(
      model, house, episode, cfg.max_steps,
      [&](const HeadOutputs& out, const Observation&, int) {
        // Sampling uses the probabilities only; the graph-connected nodes
        // are built in the record callback.
        Tensor probs = softmax(out.action_logits.detach());
        return sample_index(probs, rng);
      },
      [&](const Observation& obs, HeadOutputs out, int action, const AgentState& next_agent,
          bool terminal) {
        RLStep step;
        step.neg_log_prob = cross_entropy(out.action_logits, action);
        step.action_probs = softmax(out.action_logits);
        step.value = out.value;
        step.action = action;
        step.action_prob = std::exp(-step.neg_log_prob.item());
        const double dist_after = shortest_distance(house, next_agent.viewpoint, episode.goal);
        step.reward = reward(dist_before, dist_after, terminal, cfg);
        dist_before = dist_after;
        if (!obs.candidates[action].is_stop) rollout.visited.push_back(next_agent.viewpoint);
        if (terminal) rollout.stopped = obs.candidates[action].is_stop;
        rollout.steps.push_back(std::move(step));
      });
  return rollout;
}

A2CLoss a2c_loss(const RolloutRecord& rollout, float gamma, const TrainConfig& cfg,
                 const std::vector<float>* frozen_advantages) {
  if (rollout.steps.empty()) throw std::invalid_argument("a2c_loss: empty rollout");
  const size_t n = rollout.steps.size();
  A2CLoss loss;
  loss.returns.resize(n);
  float acc = 0.0f;
  for (size_t i = n; i-- > 0;) {
    acc = rollout.steps[i].reward + gamma * acc;
    loss.returns[i] = acc;
  }
  loss.advantages.resize(n);
  for (size_t i = 0; i < n; ++i) {
    loss.advantages[i] = frozen_advantages != nullptr
                             ? (*frozen_advantages)[i]
                             : loss.returns[i] - rollout.steps[i].value.item();
  }
  Tensor policy = Tensor::scalar(0.0f);
  Tensor value = Tensor::scalar(0.0f);
  for (size_t i = 0; i < n; ++i) {
    // -log p * advantage, advantage held constant for the policy gradient.
    policy = add(policy, scale(rollout.steps[i].neg_log_prob, loss.advantages[i]));
    Tensor residual = add_scalar(rollout.steps[i].value, -loss.returns[i]);
    value = add(value, mul(residual, residual));
    if (cfg.entropy_weight > 0.0f) {
      const Tensor& p = rollout.steps[i].action_probs;
      policy = add(policy, scale(sum(mul(p, log(p))), cfg.entropy_weight));
    }
  }
  loss.policy = policy;
  loss.value = value;
  loss.total = add(policy, value);
  return loss;
}

Tensor total_loss(const Tensor& rl, const Tensor& il, float lambda3) {
  return add(rl, scale(il, lambda3));
}

TrajectoryRecord greedy_rollout(const OristModel& model, const House& house,
                                const Episode& episode, int max_steps, const std::string& mode) {
  NoGradGuard no_grad;
  TrajectoryRecord traj;
  traj.episode_id = episode.id;
  traj.mode = mode;
  traj.visited.push_back(episode.start);
  run_rollout(
      model, house, episode, max_steps,
      [](const HeadOutputs& out, const Observation&, int) {
        return argmax_index(out.action_logits.values());
      },
      [&](const Observation& obs, HeadOutputs, int action, const AgentState& next_agent, bool) {
        if (!obs.candidates[action].is_stop) {
          traj.hop_lengths.push_back(
              house.edge_length(traj.visited.back(), next_agent.viewpoint));
          traj.visited.push_back(next_agent.viewpoint);
        }
      });
  traj.stop = traj.visited.back();
  return traj;
}

}  // namespace seqnav
