#pragma once

// Test-only reference implementations, kept independent of the production
// code paths they check: central finite differences for gradients, an
// all-pairs Floyd-Warshall for geodesics, a from-scratch metrics
// computation, and a uniform random-walk baseline.

#include <functional>
#include <span>
#include <vector>

#include "core/tensor.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"
#include "train/rollout.hpp"
#include "world/world.hpp"

namespace seqnav::testing {

struct FdResult {
  double max_rel_err = 0.0;
  int entries_checked = 0;
};

// Compares analytic gradients of loss_fn (a fresh graph per call) against
// central differences. Relative error uses max(1, |fd|, |grad|) as the
// denominator so near-zero gradients are judged absolutely.
// samples_per_param < 0 checks every entry.
FdResult finite_difference_check(const std::vector<Tensor>& params,
                                 const std::function<Tensor()>& loss_fn, float step = 1e-3f,
                                 int samples_per_param = -1, uint64_t seed = 12345);

// Exhaustive all-pairs shortest distances.
std::vector<std::vector<double>> floyd_warshall(const House& house);

struct RefEpisodeMetrics {
  double tl = 0, ne = 0, sr = 0, spl = 0, osr = 0, gp = 0, rgs = 0, rgspl = 0;
};

// Recomputes one trajectory's metrics from first principles on top of the
// Floyd-Warshall distances.
RefEpisodeMetrics reference_metrics(const TrajectoryRecord& traj, const WorldSet& worlds,
                                    double success_threshold_m);

struct BaselineStats {
  double sr = 0;
  double gp = 0;
};

// Uniform random policy over the candidate set (STOP included), simulated
// `samples` times.
BaselineStats random_walk_baseline(const House& house, const Episode& episode, int max_steps,
                                   int samples, uint64_t seed, double success_threshold_m);

// Re-runs a rollout with a fixed action sequence, rebuilding the loss graph
// from the current parameters; rewards depend only on the actions, so the
// result is a pure function of the parameters.
RolloutRecord replay_rollout(const OristModel& model, const House& house, const Episode& episode,
                             const TrainConfig& cfg, std::span<const int> actions);

// Small hand-built fixtures.
House line_house(std::vector<double> edge_lengths);  // viewpoints on the x axis
WorldSet tiny_worldset(House house, std::vector<Episode> episodes);

}  // namespace seqnav::testing
