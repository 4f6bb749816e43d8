#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "world/world.hpp"

using namespace seqnav;
namespace oracle = seqnav::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

WorldGenConfig small_config() {
  WorldGenConfig cfg;
  cfg.num_viewpoints = 10;
  cfg.num_rooms = 3;
  cfg.min_path_len = 1;
  cfg.max_path_len = 3;
  cfg.object_feature_dim = 16;
  return cfg;
}

}  // namespace

TEST_CASE("direction_bin partitions the circle") {
  CHECK(direction_bin(10.0 * kPi / 180.0) == DirectionBin::kFront);
  CHECK(direction_bin(90.0 * kPi / 180.0) == DirectionBin::kRight);
  CHECK(direction_bin(180.0 * kPi / 180.0) == DirectionBin::kBack);
  CHECK(direction_bin(270.0 * kPi / 180.0) == DirectionBin::kLeft);
  CHECK(direction_bin(314.0 * kPi / 180.0) == DirectionBin::kLeft);
  CHECK(direction_bin(315.0 * kPi / 180.0) == DirectionBin::kFront);

  // 1-degree sweep: every angle lands in exactly one quarter and the
  // boundaries match the stated intervals.
  for (int deg = 0; deg < 360; ++deg) {
    const DirectionBin bin = direction_bin(deg * kPi / 180.0);
    DirectionBin expected;
    if (deg >= 315 || deg < 45) {
      expected = DirectionBin::kFront;
    } else if (deg < 135) {
      expected = DirectionBin::kRight;
    } else if (deg < 225) {
      expected = DirectionBin::kBack;
    } else {
      expected = DirectionBin::kLeft;
    }
    CHECK(bin == expected);
  }
}

TEST_CASE("generate_house: two viewpoints give one edge, connected") {
  WorldGenConfig cfg = small_config();
  cfg.num_viewpoints = 2;
  cfg.max_path_len = 1;
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House h = generate_house(1, cfg, lex, "h0");
  CHECK(h.viewpoints.size() == 2);
  CHECK(h.edges.size() == 1);
  CHECK(h.adjacent(0, 1));
}

TEST_CASE("generate_house is deterministic per seed") {
  WorldGenConfig cfg = small_config();
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House a = generate_house(5, cfg, lex, "h");
  const House b = generate_house(5, cfg, lex, "h");
  CHECK(house_to_json(a) == house_to_json(b));
  const House c = generate_house(6, cfg, lex, "h");
  CHECK(house_to_json(a) != house_to_json(c));
}

TEST_CASE("generate_house: 50 viewpoints at low density stay connected") {
  WorldGenConfig cfg = small_config();
  cfg.num_viewpoints = 50;
  cfg.edge_density = 0.1;
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House h = generate_house(99, cfg, lex, "big");
  // Exhaustive reachability, independent of the house's own validation.
  std::set<int> reached{0};
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const auto& e : h.edges) {
      for (int other : {e[0] == v ? e[1] : -1, e[1] == v ? e[0] : -1}) {
        if (other >= 0 && !reached.count(other)) {
          reached.insert(other);
          stack.push_back(other);
        }
      }
    }
  }
  CHECK(reached.size() == 50);
}

TEST_CASE("generate_house rejects unsatisfiable configs") {
  WorldGenConfig cfg = small_config();
  cfg.objects_per_view = 0;
  const Lexicon lex = Lexicon::build(8, 24);
  CHECK_THROWS_AS(generate_house(1, cfg, lex, "h"), std::invalid_argument);
  WorldGenConfig cfg2 = small_config();
  cfg2.num_viewpoints = 1;
  CHECK_THROWS_AS(generate_house(1, cfg2, lex, "h"), std::invalid_argument);
}

TEST_CASE("house invariants: every viewpoint has objects, views in range") {
  WorldGenConfig cfg = small_config();
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const House h = generate_house(seed, cfg, lex, "h");
    for (size_t v = 0; v < h.viewpoints.size(); ++v) CHECK(!h.objects_at[v].empty());
    for (const auto& o : h.objects) {
      CHECK(o.view >= 0);
      CHECK(o.view < kViewsPerPanorama);
      CHECK(o.feature.size() == static_cast<size_t>(cfg.object_feature_dim));
    }
  }
}

TEST_CASE("sample_episode: single-hop instruction mentions the goal room") {
  WorldGenConfig cfg = small_config();
  cfg.min_path_len = 1;
  cfg.max_path_len = 1;
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House h = generate_house(3, cfg, lex, "h");
  const Episode ep = sample_episode(h, 11, cfg, lex, "e0");
  REQUIRE(ep.path.size() == 2);
  CHECK(ep.path.front() == ep.start);
  CHECK(ep.path.back() == ep.goal);
  const std::string goal_room_word = lex.room_types[ep.goal_room];
  CHECK(ep.instruction_text.find(goal_room_word) != std::string::npos);
  CHECK(ep.goal_room == h.viewpoints[ep.goal].room_type);
}

TEST_CASE("sample_episode is deterministic and bounded") {
  WorldGenConfig cfg = small_config();
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House h = generate_house(4, cfg, lex, "h");
  const Episode a = sample_episode(h, 21, cfg, lex, "e");
  const Episode b = sample_episode(h, 21, cfg, lex, "e");
  CHECK(a.instruction == b.instruction);
  CHECK(a.path == b.path);
  CHECK(a.start_heading == b.start_heading);
  const int hops = static_cast<int>(a.path.size()) - 1;
  CHECK(hops >= cfg.min_path_len);
  CHECK(hops <= cfg.max_path_len);
}

TEST_CASE("instruction direction words match re-derived teacher bins") {
  WorldGenConfig cfg = small_config();
  cfg.min_path_len = 2;
  cfg.max_path_len = 3;
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const std::set<std::string> dir_words{"forward", "right", "back", "left"};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const House h = generate_house(100 + seed, cfg, lex, "h");
    const Episode ep = sample_episode(h, 200 + seed, cfg, lex, "e");

    // Re-derive the per-hop bins from raw geometry.
    std::vector<std::string> expected;
    double heading = ep.start_heading;
    for (size_t k = 0; k + 1 < ep.path.size(); ++k) {
      const auto& from = h.viewpoints[ep.path[k]].position;
      const auto& to = h.viewpoints[ep.path[k + 1]].position;
      const double bearing = norm_angle(std::atan2(to[1] - from[1], to[0] - from[0]));
      expected.push_back(direction_word(direction_bin(norm_angle(bearing - heading))));
      heading = bearing;
    }
    std::vector<std::string> found;
    for (int tok : ep.instruction) {
      if (dir_words.count(lex.vocab.words[tok])) found.push_back(lex.vocab.words[tok]);
    }
    CHECK(found == expected);
  }
}

TEST_CASE("observe: candidate count, stop candidate, orientation contract") {
  WorldGenConfig cfg = small_config();
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House h = generate_house(8, cfg, lex, "h");
  const Episode ep = sample_episode(h, 9, cfg, lex, "e");
  const AgentState state{ep.start, ep.start_heading};
  const Observation obs = observe(h, ep, state);

  CHECK(obs.candidates.size() == h.neighbors[ep.start].size() + 1);
  CHECK(obs.stop_index == static_cast<int>(obs.candidates.size()) - 1);
  int stop_count = 0;
  for (const auto& c : obs.candidates) stop_count += c.is_stop ? 1 : 0;
  CHECK(stop_count == 1);
  const auto& stop = obs.candidates[obs.stop_index];
  CHECK(stop.orientation == std::array<float, 4>{0, 1, 0, 1});
  CHECK(stop.target == ep.start);

  for (const auto& c : obs.candidates) {
    const double st = c.orientation[0], ct = c.orientation[1];
    const double sp = c.orientation[2], cp = c.orientation[3];
    CHECK(std::abs(st * st + ct * ct - 1.0) < 1e-6);
    CHECK(std::abs(sp * sp + cp * cp - 1.0) < 1e-6);
  }
  CHECK(obs.teacher_progress == 0.0f);  // at the start
}

TEST_CASE("observe: neighbor directly ahead at same height reads (0,1,0,1)") {
  House h = oracle::line_house({4.0});
  Episode ep;
  ep.house_id = "line";
  ep.start = 0;
  ep.goal = 1;
  ep.path = {0, 1};
  // Heading along +x, straight at viewpoint 1.
  const Observation obs = observe(h, ep, {0, 0.0});
  REQUIRE(obs.candidates.size() == 2);
  const auto& c = obs.candidates[0];
  CHECK(c.target == 1);
  CHECK(std::abs(c.orientation[0] - 0.0f) < 1e-6);
  CHECK(std::abs(c.orientation[1] - 1.0f) < 1e-6);
  CHECK(std::abs(c.orientation[2] - 0.0f) < 1e-6);
  CHECK(std::abs(c.orientation[3] - 1.0f) < 1e-6);
  CHECK(c.dir_bin == DirectionBin::kFront);
}

TEST_CASE("observe: rotating the heading subtracts from every candidate theta") {
  WorldGenConfig cfg = small_config();
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  const House h = generate_house(12, cfg, lex, "h");
  const Episode ep = sample_episode(h, 13, cfg, lex, "e");
  const double delta = 0.7;
  const Observation a = observe(h, ep, {ep.start, 1.0});
  const Observation b = observe(h, ep, {ep.start, 1.0 + delta});
  REQUIRE(a.candidates.size() == b.candidates.size());
  for (size_t i = 0; i + 1 < a.candidates.size(); ++i) {  // movement candidates
    const double expect = norm_angle(a.candidates[i].theta - delta);
    CHECK(std::abs(b.candidates[i].theta - expect) < 1e-9);
  }
}

TEST_CASE("teacher_action: stop at goal, goal candidate on a two-node graph") {
  House h = oracle::line_house({5.0});
  Episode ep;
  ep.house_id = "line";
  ep.start = 0;
  ep.goal = 1;
  ep.path = {0, 1};
  const Observation at_goal = observe(h, ep, {1, 0.0});
  CHECK(at_goal.teacher_action == at_goal.stop_index);
  const Observation at_start = observe(h, ep, {0, 0.0});
  CHECK(at_start.teacher_action == 0);
  CHECK(at_start.candidates[0].target == 1);
  CHECK(teacher_action(h, ep, {0, 0.0}) == 0);
}

TEST_CASE("following the teacher reaches the goal in shortest-path hops") {
  WorldGenConfig cfg = small_config();
  cfg.num_viewpoints = 12;
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const House h = generate_house(300 + seed, cfg, lex, "h");
    const Episode ep = sample_episode(h, 400 + seed, cfg, lex, "e");
    const auto fw = oracle::floyd_warshall(h);

    AgentState agent{ep.start, ep.start_heading};
    int hops = 0;
    float prev_progress = -1.0f;
    while (hops < 20) {
      const Observation obs = observe(h, ep, agent);
      CHECK(obs.teacher_progress >= prev_progress);  // nondecreasing
      prev_progress = obs.teacher_progress;
      if (obs.candidates[obs.teacher_action].is_stop) break;
      agent = apply_action(h, agent, obs.candidates[obs.teacher_action]);
      ++hops;
    }
    CHECK(agent.viewpoint == ep.goal);
    CHECK(hops == static_cast<int>(ep.path.size()) - 1);
    // Teacher trajectory length equals the geodesic.
    double walked = 0.0;
    for (size_t k = 0; k + 1 < ep.path.size(); ++k) {
      walked += h.edge_length(ep.path[k], ep.path[k + 1]);
    }
    CHECK(walked == doctest::Approx(fw[ep.start][ep.goal]).epsilon(1e-9));
  }
}

TEST_CASE("teacher_progress: start 0, goal 1, equal-edge midpoint 0.5") {
  House h = oracle::line_house({2.0, 2.0});
  Episode ep;
  ep.house_id = "line";
  ep.start = 0;
  ep.goal = 2;
  ep.path = {0, 1, 2};
  CHECK(teacher_progress(h, ep, {0, 0.0}) == 0.0f);
  CHECK(teacher_progress(h, ep, {2, 0.0}) == 1.0f);
  CHECK(teacher_progress(h, ep, {1, 0.0}) == doctest::Approx(0.5));
}

TEST_CASE("shortest_distance: identity, two-node, all-pairs vs Floyd-Warshall") {
  House line = oracle::line_house({3.5});
  CHECK(shortest_distance(line, 0, 0) == 0.0);
  CHECK(shortest_distance(line, 0, 1) == doctest::Approx(3.5));

  WorldGenConfig cfg = small_config();
  cfg.num_viewpoints = 20;
  const Lexicon lex = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const House h = generate_house(500 + seed, cfg, lex, "h");
    const auto fw = oracle::floyd_warshall(h);
    for (int a = 0; a < 20; ++a) {
      const auto from_a = shortest_distances_from(h, a);
      for (int b = 0; b < 20; ++b) {
        CHECK(std::abs(from_a[b] - fw[a][b]) < 1e-9);
        CHECK(std::abs(from_a[b] - fw[b][a]) < 1e-9);  // symmetry
      }
    }
  }
}

TEST_CASE("world set: generation, splits, serialization round trip") {
  WorldSetConfig cfg;
  cfg.num_viewpoints = 8;
  cfg.num_houses_train = 3;
  cfg.num_houses_val_unseen = 2;
  cfg.episodes_train = 6;
  cfg.episodes_val_seen = 4;
  cfg.episodes_val_unseen = 4;
  cfg.min_path_len = 1;
  cfg.max_path_len = 2;
  cfg.object_feature_dim = 16;
  const WorldSet ws = generate_world_set(77, cfg);
  CHECK(ws.houses_train.size() == 3);
  CHECK(ws.houses_unseen.size() == 2);
  CHECK(ws.episodes_train.size() == 6);

  std::set<std::string> train_ids, unseen_ids;
  for (const auto& h : ws.houses_train) train_ids.insert(h.id);
  for (const auto& h : ws.houses_unseen) unseen_ids.insert(h.id);
  for (const auto& id : unseen_ids) CHECK(!train_ids.count(id));
  for (const auto& e : ws.episodes_val_unseen) CHECK(unseen_ids.count(e.house_id));
  for (const auto& e : ws.episodes_val_seen) CHECK(train_ids.count(e.house_id));

  const std::string dir = "/tmp/seqnav_test_ws";
  ws.save(dir);
  const WorldSet loaded = WorldSet::load(dir);
  CHECK(loaded.houses_train.size() == ws.houses_train.size());
  CHECK(house_to_json(loaded.houses_train[0]) == house_to_json(ws.houses_train[0]));
  CHECK(loaded.episodes_train[0].instruction == ws.episodes_train[0].instruction);
  CHECK(loaded.lexicon.vocab.words == ws.lexicon.vocab.words);
  CHECK(loaded.find_episode(ws.episodes_train[0].id) != nullptr);
  CHECK(loaded.find_episode("nope") == nullptr);
}

TEST_CASE("category features are global across houses") {
  const auto a = category_base_feature(3, 16);
  const auto b = category_base_feature(3, 16);
  CHECK(a == b);
  double norm = 0.0;
  for (float x : a) norm += static_cast<double>(x) * x;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(category_base_feature(4, 16) != a);
}

TEST_CASE("vocab rejects unknown words; lexicon sizes follow the config") {
  const Lexicon lex = Lexicon::build(8, 24);
  CHECK(lex.room_types.size() == 8);
  CHECK(lex.categories.size() == 24);
  CHECK(lex.vocab.id("[CLS]") == Vocab::kCls);
  CHECK_THROWS_AS(lex.vocab.id("quux"), std::invalid_argument);
  const Lexicon big = Lexicon::build(10, 30);
  CHECK(big.room_types[9] == "room_9");
  CHECK(big.categories[29] == "object_29");
}
