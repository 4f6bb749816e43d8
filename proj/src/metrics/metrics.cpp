#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "core/errors.hpp"

namespace seqnav {

using nlohmann::json;

std::string trajectory_to_json(const TrajectoryRecord& t) {
  json j{{"episode", t.episode_id},
         {"visited", t.visited},
         {"hop_lengths", t.hop_lengths},
         {"stop", t.stop},
         {"mode", t.mode}};
  return j.dump();
}

TrajectoryRecord trajectory_from_json(const std::string& line) {
  const json j = json::parse(line);
  TrajectoryRecord t;
  t.episode_id = j.at("episode").get<std::string>();
  t.visited = j.at("visited").get<std::vector<int>>();
  t.hop_lengths = j.at("hop_lengths").get<std::vector<double>>();
  t.stop = j.at("stop").get<int>();
  t.mode = j.at("mode").get<std::string>();
  return t;
}

std::string MetricsReport::to_json() const {
  json agg{{"TL", tl}, {"NE", ne},   {"SR", sr},   {"SPL", spl},
           {"OSR", osr}, {"GP", gp}, {"RGS", rgs}, {"RGSPL", rgspl},
           {"num_episodes", num_episodes}};
  json eps = json::array();
  for (const auto& e : episodes) {
    eps.push_back(json{{"id", e.id},
                       {"tl", e.tl},
                       {"ne", e.ne},
                       {"sr", e.sr},
                       {"spl", e.spl},
                       {"osr", e.osr},
                       {"gp", e.gp},
                       {"rgs", e.rgs},
                       {"rgspl", e.rgspl}});
  }
  return json{{"aggregate", agg}, {"episodes", eps}}.dump(2);
}

namespace {

bool object_visible(const House& house, int viewpoint, int category) {
  for (int oi : house.objects_at[viewpoint]) {
    if (house.objects[oi].category == category) return true;
  }
  return false;
}

}  // namespace

MetricsReport evaluate(std::span<const TrajectoryRecord> trajectories, const WorldSet& worlds,
                       double success_threshold_m) {
  MetricsReport report;
  for (const TrajectoryRecord& t : trajectories) {
    const Episode* ep = worlds.find_episode(t.episode_id);
    if (ep == nullptr) {
      throw NotFoundError("evaluate: unknown episode '" + t.episode_id + "'");
    }
    const House& house = worlds.house(ep->house_id);
    if (t.visited.empty() || t.visited.front() != ep->start) {
      throw std::invalid_argument("evaluate: trajectory for '" + t.episode_id +
                                  "' does not begin at the episode start");
    }
    if (t.visited.back() != t.stop) {
      throw std::invalid_argument("evaluate: trajectory for '" + t.episode_id +
                                  "' stop disagrees with visited sequence");
    }
    for (size_t k = 0; k + 1 < t.visited.size(); ++k) {
      if (!house.adjacent(t.visited[k], t.visited[k + 1])) {
        throw std::invalid_argument("evaluate: trajectory for '" + t.episode_id +
                                    "' hops between non-adjacent viewpoints " +
                                    std::to_string(t.visited[k]) + " -> " +
                                    std::to_string(t.visited[k + 1]));
      }
    }

    const auto goal_dist = shortest_distances_from(house, ep->goal);
    const double d0 = goal_dist[ep->start];
    double executed = 0.0;
    for (double h : t.hop_lengths) executed += h;

    EpisodeMetrics m;
    m.id = t.episode_id;
    m.tl = executed;
    m.ne = goal_dist[t.stop];
    const bool reverie = t.mode == "reverie";
    const bool stop_success = reverie ? object_visible(house, t.stop, ep->target_object)
                                      : m.ne < success_threshold_m;
    m.sr = stop_success ? 1.0 : 0.0;
    m.spl = m.sr * d0 / std::max(d0, executed);
    bool oracle_success = false;
    for (int v : t.visited) {
      if (reverie ? object_visible(house, v, ep->target_object)
                  : goal_dist[v] < success_threshold_m) {
        oracle_success = true;
        break;
      }
    }
    m.osr = oracle_success ? 1.0 : 0.0;
    m.gp = d0 - goal_dist[t.stop];
    m.rgs = object_visible(house, t.stop, ep->target_object) ? 1.0 : 0.0;
    m.rgspl = m.rgs * d0 / std::max(d0, executed);
    report.episodes.push_back(std::move(m));
  }

  report.num_episodes = static_cast<int>(report.episodes.size());
  if (report.num_episodes > 0) {
    for (const auto& e : report.episodes) {
      report.tl += e.tl;
      report.ne += e.ne;
      report.sr += e.sr;
      report.spl += e.spl;
      report.osr += e.osr;
      report.gp += e.gp;
      report.rgs += e.rgs;
      report.rgspl += e.rgspl;
    }
    const double inv = 1.0 / report.num_episodes;
    report.tl *= inv;
    report.ne *= inv;
    report.sr *= inv;
    report.spl *= inv;
    report.osr *= inv;
    report.gp *= inv;
    report.rgs *= inv;
    report.rgspl *= inv;
  }
  return report;
}

bool oracle_check(std::span<const House> houses, std::string* mismatches) {
  bool ok = true;
  std::string report;
  for (const House& house : houses) {
    const int n = static_cast<int>(house.viewpoints.size());
    if (n > 200) {
      throw std::invalid_argument("oracle_check: house " + house.id + " exceeds 200 viewpoints");
    }
    house.validate();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, kInf));
    for (int i = 0; i < n; ++i) dist[i][i] = 0.0;
    for (size_t e = 0; e < house.edges.size(); ++e) {
      const int a = house.edges[e][0], b = house.edges[e][1];
      dist[a][b] = std::min(dist[a][b], house.edge_lengths[e]);
      dist[b][a] = dist[a][b];
    }
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (dist[i][k] + dist[k][j] < dist[i][j]) dist[i][j] = dist[i][k] + dist[k][j];
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      const auto from_i = shortest_distances_from(house, i);
      for (int j = 0; j < n; ++j) {
        if (std::abs(from_i[j] - dist[i][j]) > 1e-6) {
          ok = false;
          report += house.id + ": (" + std::to_string(i) + ", " + std::to_string(j) + ") " +
                    std::to_string(from_i[j]) + " vs " + std::to_string(dist[i][j]) + "\n";
        }
      }
    }
  }
  if (mismatches != nullptr) *mismatches = report;
  return ok;
}

}  // namespace seqnav
