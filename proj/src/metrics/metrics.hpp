#pragma once

#include <span>
#include <string>
#include <vector>

#include "world/world.hpp"

namespace seqnav {

// An executed navigation path, as consumed by evaluation.
struct TrajectoryRecord {
  std::string episode_id;
  std::vector<int> visited;          // viewpoint sequence, starts at the episode start
  std::vector<double> hop_lengths;   // one per transition
  int stop = 0;                      // final viewpoint
  std::string mode = "r2r";          // r2r | reverie | ndh
};

std::string trajectory_to_json(const TrajectoryRecord& t);
TrajectoryRecord trajectory_from_json(const std::string& line);

struct EpisodeMetrics {
  std::string id;
  double tl = 0, ne = 0, sr = 0, spl = 0, osr = 0, gp = 0, rgs = 0, rgspl = 0;
};

struct MetricsReport {
  double tl = 0, ne = 0, sr = 0, spl = 0, osr = 0, gp = 0, rgs = 0, rgspl = 0;
  int num_episodes = 0;
  std::vector<EpisodeMetrics> episodes;

  std::string to_json() const;
};

// Computes TL/NE/SR/SPL/OSR/GP/RGS/RGSPL over the trajectories. Success is
// mode-specific: r2r and ndh stop within the distance threshold of the goal;
// reverie requires the target object category to be visible somewhere in the
// stop viewpoint's panorama. A trajectory with non-adjacent consecutive
// viewpoints is rejected, naming the offending hop.
MetricsReport evaluate(std::span<const TrajectoryRecord> trajectories, const WorldSet& worlds,
                       double success_threshold_m = 3.0);

// Cross-checks the production shortest-path routine against an exhaustive
// Floyd-Warshall on every house (at most 200 viewpoints each). Returns true
// when all pairwise distances agree within 1e-6; otherwise false, with the
// mismatching pairs described in *mismatches when given.
bool oracle_check(std::span<const House> houses, std::string* mismatches = nullptr);

}  // namespace seqnav
