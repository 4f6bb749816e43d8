#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace seqnav::testing {

FdResult finite_difference_check(const std::vector<Tensor>& params,
                                 const std::function<Tensor()>& loss_fn, float step,
                                 int samples_per_param, uint64_t seed) {
  for (const Tensor& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<float>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());

  RngStream rng(seed);
  FdResult result;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    const int64_t n = p.size();
    std::vector<int64_t> entries;
    if (samples_per_param < 0 || samples_per_param >= n) {
      for (int64_t i = 0; i < n; ++i) entries.push_back(i);
    } else {
      for (int s = 0; s < samples_per_param; ++s) {
        entries.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
      }
    }
    for (int64_t idx : entries) {
      auto vals = p.values_mut();
      const float saved = vals[idx];
      vals[idx] = saved + step;
      const double f_plus = loss_fn().item();
      vals[idx] = saved - step;
      const double f_minus = loss_fn().item();
      vals[idx] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * step);
      const double g = grads[pi][static_cast<size_t>(idx)];
      const double rel = std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)});
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.entries_checked;
    }
  }
  return result;
}

std::vector<std::vector<double>> floyd_warshall(const House& house) {
  const int n = static_cast<int>(house.viewpoints.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, kInf));
  for (int i = 0; i < n; ++i) d[i][i] = 0.0;
  for (size_t e = 0; e < house.edges.size(); ++e) {
    const int a = house.edges[e][0], b = house.edges[e][1];
    d[a][b] = std::min(d[a][b], house.edge_lengths[e]);
    d[b][a] = d[a][b];
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
      }
    }
  }
  return d;
}

namespace {

bool ref_object_visible(const House& house, int viewpoint, int category) {
  for (const auto& o : house.objects) {
    if (o.viewpoint == viewpoint && o.category == category) return true;
  }
  return false;
}

}  // namespace

RefEpisodeMetrics reference_metrics(const TrajectoryRecord& traj, const WorldSet& worlds,
                                    double success_threshold_m) {
  const Episode* ep = worlds.find_episode(traj.episode_id);
  if (ep == nullptr) throw std::runtime_error("reference_metrics: unknown episode");
  const House& house = worlds.house(ep->house_id);
  const auto dist = floyd_warshall(house);

  RefEpisodeMetrics m;
  for (double h : traj.hop_lengths) m.tl += h;
  m.ne = dist[traj.stop][ep->goal];
  const double d0 = dist[ep->start][ep->goal];
  const bool reverie = traj.mode == "reverie";
  const bool success = reverie ? ref_object_visible(house, traj.stop, ep->target_object)
                               : m.ne < success_threshold_m;
  m.sr = success ? 1.0 : 0.0;
  m.spl = m.sr * d0 / std::max(d0, m.tl);
  for (int v : traj.visited) {
    const bool ok = reverie ? ref_object_visible(house, v, ep->target_object)
                            : dist[v][ep->goal] < success_threshold_m;
    if (ok) {
      m.osr = 1.0;
      break;
    }
  }
  m.gp = d0 - dist[traj.stop][ep->goal];
  m.rgs = ref_object_visible(house, traj.stop, ep->target_object) ? 1.0 : 0.0;
  m.rgspl = m.rgs * d0 / std::max(d0, m.tl);
  return m;
}

BaselineStats random_walk_baseline(const House& house, const Episode& episode, int max_steps,
                                   int samples, uint64_t seed, double success_threshold_m) {
  RngStream rng(seed);
  const auto dist = floyd_warshall(house);
  BaselineStats stats;
  for (int s = 0; s < samples; ++s) {
    AgentState agent{episode.start, episode.start_heading};
    for (int t = 0; t < max_steps; ++t) {
      const Observation obs = observe(house, episode, agent);
      const int action = static_cast<int>(rng.uniform_int(obs.candidates.size()));
      if (obs.candidates[action].is_stop) break;
      agent = apply_action(house, agent, obs.candidates[action]);
    }
    const double dstop = dist[agent.viewpoint][episode.goal];
    if (dstop < success_threshold_m) stats.sr += 1.0;
    stats.gp += dist[episode.start][episode.goal] - dstop;
  }
  stats.sr /= samples;
  stats.gp /= samples;
  return stats;
}

RolloutRecord replay_rollout(const OristModel& model, const House& house, const Episode& episode,
                             const TrainConfig& cfg, std::span<const int> actions) {
  RolloutRecord rollout;
  rollout.visited.push_back(episode.start);
  StepState state = model.initial_state();
  AgentState agent{episode.start, episode.start_heading};
  double dist_before = shortest_distance(house, episode.start, episode.goal);
  for (size_t t = 0; t < actions.size(); ++t) {
    const Observation obs = observe(house, episode, agent);
    EncodedStep enc = model.encode_step(episode.instruction, house, obs, state);
    HeadOutputs out = model.heads(enc);
    const int action = actions[t];
    const bool is_stop = obs.candidates[action].is_stop;
    const bool terminal = is_stop || t + 1 == actions.size();
    const AgentState next_agent = apply_action(house, agent, obs.candidates[action]);
    RLStep step;
    step.neg_log_prob = cross_entropy(out.action_logits, action);
    step.action_probs = softmax(out.action_logits);
    step.value = out.value;
    step.action = action;
    step.action_prob = std::exp(-step.neg_log_prob.item());
    const double dist_after = shortest_distance(house, next_agent.viewpoint, episode.goal);
    step.reward = reward(dist_before, dist_after, terminal, cfg);
    dist_before = dist_after;
    if (!is_stop) rollout.visited.push_back(next_agent.viewpoint);
    rollout.steps.push_back(std::move(step));
    if (terminal) {
      rollout.stopped = is_stop;
      break;
    }
    agent = next_agent;
    state = model.config().temporal_context ? enc.next_state : model.initial_state();
  }
  return rollout;
}

House line_house(std::vector<double> edge_lengths) {
  House h;
  h.id = "line";
  double x = 0.0;
  h.viewpoints.push_back({0, {0.0, 0.0, 0.0}, 0});
  for (size_t i = 0; i < edge_lengths.size(); ++i) {
    x += edge_lengths[i];
    h.viewpoints.push_back({static_cast<int>(i) + 1, {x, 0.0, 0.0}, 0});
    h.edges.push_back({static_cast<int>(i), static_cast<int>(i) + 1});
    h.edge_lengths.push_back(edge_lengths[i]);
  }
  for (int i = 0; i < static_cast<int>(h.viewpoints.size()); ++i) {
    ObjectPlacement o;
    o.viewpoint = i;
    o.view = 0;
    o.category = 0;
    o.feature = category_base_feature(0, 8);
    o.box = {0.1f, 0.1f, 0.2f, 0.2f, 0.1f, 0.1f, 0.01f};
    h.objects.push_back(std::move(o));
  }
  h.rebuild_indexes();
  return h;
}

WorldSet tiny_worldset(House house, std::vector<Episode> episodes) {
  WorldSet ws;
  ws.lexicon = Lexicon::build(8, 24);
  ws.config.object_feature_dim = 8;
  ws.houses_train.push_back(std::move(house));
  ws.episodes_train = std::move(episodes);
  return ws;
}

}  // namespace seqnav::testing
