#include "world/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "core/errors.hpp"

#include <json.hpp>

namespace seqnav {

using nlohmann::json;

namespace {

constexpr uint64_t kHouseSalt = 0x484F555345ULL;
constexpr uint64_t kUnseenSalt = 0x554E5345454EULL;
constexpr uint64_t kEpisodeSalt = 0x45504953ULL;
constexpr uint64_t kCategorySalt = 0x43415446454154ULL;

constexpr double kPi = 3.14159265358979323846;

std::string format_id(const std::string& prefix, int i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, width - n.size(), '0');
  return prefix + n;
}

double bearing_between(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return norm_angle(std::atan2(b[1] - a[1], b[0] - a[0]));
}

double elevation_between(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double horiz = std::hypot(b[0] - a[0], b[1] - a[1]);
  return std::atan2(b[2] - a[2], horiz);
}

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Next hop from `from` toward `goal` along a shortest path; deterministic
// tie-break on the smaller neighbor id.
int next_hop(const House& house, int from, int goal) {
  if (from == goal) return goal;
  const auto dist = shortest_distances_from(house, goal);
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int nb : house.neighbors[from]) {
    const double c = house.edge_length(from, nb) + dist[nb];
    if (c < best_cost - 1e-12) {
      best_cost = c;
      best = nb;
    }
  }
  if (best < 0 || !std::isfinite(best_cost)) {
    throw std::runtime_error("next_hop: goal unreachable from viewpoint " + std::to_string(from));
  }
  return best;
}

}  // namespace

double norm_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a;
}

DirectionBin direction_bin(double theta) {
  const double deg = norm_angle(theta) * 180.0 / kPi;
  if (deg >= 315.0 || deg < 45.0) return DirectionBin::kFront;
  if (deg < 135.0) return DirectionBin::kRight;
  if (deg < 225.0) return DirectionBin::kBack;
  return DirectionBin::kLeft;
}

const char* direction_word(DirectionBin bin) {
  switch (bin) {
    case DirectionBin::kFront: return "forward";
    case DirectionBin::kRight: return "right";
    case DirectionBin::kBack: return "back";
    case DirectionBin::kLeft: return "left";
  }
  return "forward";
}

int view_index(double bearing, double phi) {
  int col = static_cast<int>(norm_angle(bearing) / (2.0 * kPi / 12.0));
  col = std::min(col, 11);
  int row = 1;
  if (phi < -kPi / 6.0) row = 0;
  if (phi > kPi / 6.0) row = 2;
  return row * 12 + col;
}

// ---- House ----

void House::rebuild_indexes() {
  neighbors.assign(viewpoints.size(), {});
  objects_at.assign(viewpoints.size(), {});
  for (const auto& e : edges) {
    neighbors[e[0]].push_back(e[1]);
    neighbors[e[1]].push_back(e[0]);
  }
  for (auto& ns : neighbors) std::sort(ns.begin(), ns.end());
  for (size_t i = 0; i < objects.size(); ++i) {
    objects_at[objects[i].viewpoint].push_back(static_cast<int>(i));
  }
}

bool House::adjacent(int a, int b) const {
  const auto& ns = neighbors[a];
  return std::binary_search(ns.begin(), ns.end(), b);
}

double House::edge_length(int a, int b) const {
  if (a > b) std::swap(a, b);
  for (size_t i = 0; i < edges.size(); ++i) {
    if (edges[i][0] == a && edges[i][1] == b) return edge_lengths[i];
  }
  throw std::invalid_argument("edge_length: no edge " + std::to_string(a) + "-" + std::to_string(b));
}

void House::validate() const {
  const int n = static_cast<int>(viewpoints.size());
  if (n < 2) throw std::runtime_error("house " + id + ": fewer than 2 viewpoints");
  for (int i = 0; i < n; ++i) {
    if (viewpoints[i].id != i) throw std::runtime_error("house " + id + ": viewpoint ids must be dense");
  }
  for (size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e[0] < 0 || e[1] >= n || e[0] >= e[1]) {
      throw std::runtime_error("house " + id + ": malformed edge");
    }
    if (edge_lengths[i] <= 0) throw std::runtime_error("house " + id + ": nonpositive edge length");
  }
  // Connectivity.
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int nb : neighbors[v]) {
      if (!seen[nb]) {
        seen[nb] = 1;
        ++reached;
        stack.push_back(nb);
      }
    }
  }
  if (reached != n) throw std::runtime_error("house " + id + ": graph is not connected");
  for (int i = 0; i < n; ++i) {
    if (objects_at[i].empty()) {
      throw std::runtime_error("house " + id + ": viewpoint " + std::to_string(i) + " has no objects");
    }
  }
  for (const auto& o : objects) {
    if (o.view < 0 || o.view >= kViewsPerPanorama) {
      throw std::runtime_error("house " + id + ": object view index out of range");
    }
    if (o.viewpoint < 0 || o.viewpoint >= n) {
      throw std::runtime_error("house " + id + ": object viewpoint out of range");
    }
  }
}

// ---- Vocab / Lexicon ----

int Vocab::id(const std::string& w) const {
  auto it = index.find(w);
  if (it == index.end()) throw std::invalid_argument("vocab: unknown word '" + w + "'");
  return it->second;
}

void Vocab::rebuild_index() {
  index.clear();
  for (size_t i = 0; i < words.size(); ++i) {
    if (!index.emplace(words[i], static_cast<int>(i)).second) {
      throw std::runtime_error("vocab: duplicate word '" + words[i] + "'");
    }
  }
}

namespace {

const std::vector<std::string>& base_room_types() {
  static const std::vector<std::string> v = {
      "living_room", "bedroom", "kitchen", "bathroom",
      "hallway",     "office",  "dining_room", "laundry"};
  return v;
}

struct BaseCategory {
  const char* name;
  int room;
};

const std::vector<BaseCategory>& base_categories() {
  static const std::vector<BaseCategory> v = {
      {"couch", 0},       {"tv", 0},        {"fireplace", 0}, {"coffee_table", 0},
      {"bed", 1},         {"wardrobe", 1},  {"nightstand", 1},
      {"oven", 2},        {"microwave", 2}, {"fridge", 2},    {"sink", 2},
      {"toilet", 3},      {"shower", 3},    {"bathtub", 3},   {"mirror", 3},
      {"rug", 4},         {"lamp", 4},      {"picture", 4},
      {"desk", 5},        {"chair", 5},     {"bookshelf", 5},
      {"dining_table", 6}, {"cabinet", 6},
      {"washer", 7}};
  return v;
}

const std::vector<std::string>& glue_words() {
  static const std::vector<std::string> v = {
      ".",      "leave",  "walk",   "through", "the",   "go",    "forward",
      "turn",   "right",  "back",   "left",    "past",  "find",  "in",
      "to",     "then",   "stop",   "near",    "at",    "enter", "exit",
      "head",   "into",   "reach",  "and",     "room",  "move",  "you",
      "see",    "door",   "toward", "around",  "next",  "step",  "area",
      "along",  "until",  "stay",   "take"};
  return v;
}

}  // namespace

Lexicon Lexicon::build(int room_taxonomy_size, int num_object_categories) {
  if (room_taxonomy_size < 1) throw std::invalid_argument("lexicon: empty room taxonomy");
  if (num_object_categories < 1) throw std::invalid_argument("lexicon: no object categories");
  Lexicon lex;
  for (int r = 0; r < room_taxonomy_size; ++r) {
    if (r < static_cast<int>(base_room_types().size())) {
      lex.room_types.push_back(base_room_types()[r]);
    } else {
      lex.room_types.push_back("room_" + std::to_string(r));
    }
  }
  for (int c = 0; c < num_object_categories; ++c) {
    if (c < static_cast<int>(base_categories().size())) {
      lex.categories.push_back(base_categories()[c].name);
      lex.category_room.push_back(base_categories()[c].room % room_taxonomy_size);
    } else {
      lex.categories.push_back("object_" + std::to_string(c));
      lex.category_room.push_back(c % room_taxonomy_size);
    }
  }
  lex.vocab.words = {"[PAD]", "[CLS]", "[SEP]"};
  for (const auto& w : glue_words()) lex.vocab.words.push_back(w);
  for (const auto& w : lex.room_types) lex.vocab.words.push_back(w);
  for (const auto& w : lex.categories) lex.vocab.words.push_back(w);
  lex.vocab.rebuild_index();
  return lex;
}

std::vector<float> category_base_feature(int category, int dim) {
  RngStream rng(RngStream::mix(kCategorySalt, RngStream::mix(category, dim)));
  std::vector<float> f(dim);
  double norm = 0.0;
  for (float& x : f) {
    x = static_cast<float>(rng.normal());
    norm += static_cast<double>(x) * x;
  }
  norm = std::sqrt(std::max(norm, 1e-12));
  for (float& x : f) x = static_cast<float>(x / norm);
  return f;
}

// ---- generation ----

void WorldGenConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("world config: " + m); };
  if (num_viewpoints < 2) fail("num_viewpoints must be >= 2");
  if (num_rooms < 1) fail("num_rooms must be >= 1");
  if (room_taxonomy_size < 1) fail("room_taxonomy_size must be >= 1");
  if (objects_per_view < 1) fail("objects_per_view must be >= 1");
  if (num_object_categories < 1) fail("num_object_categories must be >= 1");
  if (object_feature_dim < 1) fail("object_feature_dim must be >= 1");
  if (edge_density < 0.0 || edge_density > 1.0) fail("edge_density must be in [0, 1]");
  if (viewpoint_spacing_m <= 0.0) fail("viewpoint_spacing_m must be positive");
  if (min_path_len < 1 || max_path_len < min_path_len) fail("path length bounds malformed");
  if (max_path_len > num_viewpoints - 1) fail("max_path_len exceeds viewpoint count");
  if (max_instruction_tokens < 8) fail("max_instruction_tokens must be >= 8");
}

House generate_house(uint64_t seed, const WorldGenConfig& cfg, const Lexicon& lex,
                     std::string house_id) {
  cfg.validate();
  RngStream rng(seed);
  House h;
  h.id = std::move(house_id);
  const int n = cfg.num_viewpoints;
  const double side = 2.0 * cfg.viewpoint_spacing_m * std::sqrt(static_cast<double>(n));

  // Positions with a soft minimum separation so edge lengths stay
  // comparable to the success radius.
  const double min_sep = cfg.viewpoint_spacing_m * 0.8;
  for (int i = 0; i < n; ++i) {
    std::array<double, 3> pos{};
    for (int attempt = 0; attempt < 40; ++attempt) {
      pos = {rng.uniform(0.0, side), rng.uniform(0.0, side), rng.uniform(0.0, 1.5)};
      bool ok = true;
      for (const auto& vp : h.viewpoints) {
        if (std::hypot(pos[0] - vp.position[0], pos[1] - vp.position[1]) < min_sep) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    h.viewpoints.push_back({i, pos, 0});
  }

  // Euclidean minimum spanning tree guarantees connectivity.
  std::vector<char> in_tree(n, 0);
  in_tree[0] = 1;
  std::set<std::pair<int, int>> edge_set;
  double mst_total = 0.0;
  for (int added = 1; added < n; ++added) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!in_tree[i]) continue;
      for (int j = 0; j < n; ++j) {
        if (in_tree[j]) continue;
        const double d = dist3(h.viewpoints[i].position, h.viewpoints[j].position);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    in_tree[bj] = 1;
    edge_set.insert({std::min(bi, bj), std::max(bi, bj)});
    mst_total += best;
  }
  const double mean_edge = mst_total / std::max(1, n - 1);
  const double radius = 2.0 * mean_edge;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (edge_set.count({i, j})) continue;
      if (dist3(h.viewpoints[i].position, h.viewpoints[j].position) > radius) continue;
      if (rng.uniform() < cfg.edge_density) edge_set.insert({i, j});
    }
  }
  for (const auto& [a, b] : edge_set) {
    h.edges.push_back({a, b});
    h.edge_lengths.push_back(dist3(h.viewpoints[a].position, h.viewpoints[b].position));
  }

  // Rooms: Voronoi cells around sampled seed viewpoints, each cell mapped to
  // a room type, so adjacent viewpoints tend to share a room.
  const int num_rooms = std::min(cfg.num_rooms, n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<int> room_seeds(order.begin(), order.begin() + num_rooms);
  std::vector<int> room_type_of(num_rooms);
  if (num_rooms <= cfg.room_taxonomy_size) {
    std::vector<int> types(cfg.room_taxonomy_size);
    for (int t = 0; t < cfg.room_taxonomy_size; ++t) types[t] = t;
    rng.shuffle(types);
    for (int r = 0; r < num_rooms; ++r) room_type_of[r] = types[r];
  } else {
    for (int r = 0; r < num_rooms; ++r) {
      room_type_of[r] = static_cast<int>(rng.uniform_int(cfg.room_taxonomy_size));
    }
  }
  for (int i = 0; i < n; ++i) {
    int best_room = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < num_rooms; ++r) {
      const double d = dist3(h.viewpoints[i].position, h.viewpoints[room_seeds[r]].position);
      if (d < best) {
        best = d;
        best_room = r;
      }
    }
    h.viewpoints[i].room_type = room_type_of[best_room];
  }

  // Objects: categories biased toward the room's characteristic set.
  for (int i = 0; i < n; ++i) {
    std::vector<int> characteristic;
    for (size_t c = 0; c < lex.category_room.size(); ++c) {
      if (lex.category_room[c] == h.viewpoints[i].room_type) {
        characteristic.push_back(static_cast<int>(c));
      }
    }
    for (int k = 0; k < cfg.objects_per_view; ++k) {
      ObjectPlacement obj;
      obj.viewpoint = i;
      obj.view = static_cast<int>(rng.uniform_int(kViewsPerPanorama));
      if (!characteristic.empty() && rng.uniform() < 0.7) {
        obj.category = characteristic[rng.uniform_int(characteristic.size())];
      } else {
        obj.category = static_cast<int>(rng.uniform_int(lex.categories.size()));
      }
      obj.feature = category_base_feature(obj.category, cfg.object_feature_dim);
      for (float& x : obj.feature) x += 0.05f * static_cast<float>(rng.normal());
      const float x1 = static_cast<float>(rng.uniform(0.0, 0.8));
      const float y1 = static_cast<float>(rng.uniform(0.0, 0.8));
      const float w = static_cast<float>(rng.uniform(0.05, 0.2));
      const float hh = static_cast<float>(rng.uniform(0.05, 0.2));
      obj.box = {x1, y1, x1 + w, y1 + hh, hh, w, w * hh};
      h.objects.push_back(std::move(obj));
    }
  }

  h.rebuild_indexes();
  h.validate();
  return h;
}

// ---- episode sampling ----

namespace {

struct PathStepInfo {
  DirectionBin bin;
  std::vector<int> landmark_categories;  // categories visible in the step's view
};

std::vector<PathStepInfo> walk_path(const House& house, const std::vector<int>& path,
                                    double start_heading) {
  std::vector<PathStepInfo> steps;
  double heading = start_heading;
  for (size_t k = 0; k + 1 < path.size(); ++k) {
    const auto& from = house.viewpoints[path[k]].position;
    const auto& to = house.viewpoints[path[k + 1]].position;
    const double bearing = bearing_between(from, to);
    const double phi = elevation_between(from, to);
    PathStepInfo info;
    info.bin = direction_bin(norm_angle(bearing - heading));
    const int view = view_index(bearing, phi);
    for (int oi : house.objects_at[path[k]]) {
      if (house.objects[oi].view == view) info.landmark_categories.push_back(house.objects[oi].category);
    }
    steps.push_back(std::move(info));
    heading = bearing;
  }
  return steps;
}

}  // namespace

Episode sample_episode(const House& house, uint64_t seed, const WorldGenConfig& cfg,
                       const Lexicon& lex, std::string episode_id) {
  RngStream rng(seed);
  const int n = static_cast<int>(house.viewpoints.size());
  Episode ep;
  ep.id = std::move(episode_id);
  ep.house_id = house.id;

  bool found = false;
  for (int attempt = 0; attempt < 200 && !found; ++attempt) {
    const int start = static_cast<int>(rng.uniform_int(n));
    const int goal = static_cast<int>(rng.uniform_int(n));
    if (start == goal) continue;
    auto path = shortest_path(house, start, goal);
    const int hops = static_cast<int>(path.size()) - 1;
    if (hops < cfg.min_path_len || hops > cfg.max_path_len) continue;
    ep.start = start;
    ep.goal = goal;
    ep.path = std::move(path);
    found = true;
  }
  if (!found) {
    throw std::runtime_error("sample_episode: no start/goal pair with path length in [" +
                             std::to_string(cfg.min_path_len) + ", " +
                             std::to_string(cfg.max_path_len) + "] after bounded retries");
  }
  ep.start_heading = rng.uniform(0.0, 2.0 * kPi);
  ep.goal_room = house.viewpoints[ep.goal].room_type;
  const auto& goal_objects = house.objects_at[ep.goal];
  ep.target_object = house.objects[goal_objects[rng.uniform_int(goal_objects.size())]].category;

  // Instruction: exit phrase, one direction word per teacher hop (with an
  // optional landmark from that hop's view), then goal room and object.
  const auto steps = walk_path(house, ep.path, ep.start_heading);
  std::vector<int> landmark(steps.size(), -1);
  for (size_t k = 0; k < steps.size(); ++k) {
    if (!steps[k].landmark_categories.empty()) {
      landmark[k] = steps[k].landmark_categories[rng.uniform_int(steps[k].landmark_categories.size())];
    }
  }
  const int start_room = house.viewpoints[ep.start].room_type;
  auto build = [&](bool with_opener, bool with_landmarks) {
    std::vector<std::string> w;
    if (with_opener) {
      if (start_room != ep.goal_room) {
        w.insert(w.end(), {"leave", "the", lex.room_types[start_room], "."});
      } else {
        w.insert(w.end(), {"walk", "through", "the", lex.room_types[start_room], "."});
      }
    }
    for (size_t k = 0; k < steps.size(); ++k) {
      if (steps[k].bin == DirectionBin::kFront) {
        w.insert(w.end(), {"go", "forward"});
      } else {
        w.insert(w.end(), {"turn", direction_word(steps[k].bin)});
      }
      if (with_landmarks && landmark[k] >= 0) {
        w.insert(w.end(), {"past", "the", lex.categories[landmark[k]]});
      }
      w.push_back(".");
    }
    w.insert(w.end(), {"find", "the", lex.categories[ep.target_object], "in", "the",
                       lex.room_types[ep.goal_room], "."});
    return w;
  };
  std::vector<std::string> words = build(true, true);
  if (static_cast<int>(words.size()) > cfg.max_instruction_tokens) words = build(true, false);
  if (static_cast<int>(words.size()) > cfg.max_instruction_tokens) words = build(false, false);

  ep.instruction.reserve(words.size());
  std::string text;
  for (const auto& w : words) {
    ep.instruction.push_back(lex.vocab.id(w));
    if (!text.empty()) text += ' ';
    text += w;
  }
  ep.instruction_text = std::move(text);
  return ep;
}

// ---- observation ----

Observation observe(const House& house, const Episode& episode, const AgentState& state) {
  if (state.viewpoint < 0 || state.viewpoint >= static_cast<int>(house.viewpoints.size())) {
    throw std::invalid_argument("observe: viewpoint " + std::to_string(state.viewpoint) +
                                " not in house " + house.id);
  }
  Observation obs;
  obs.goal_room = episode.goal_room;
  const auto& cur = house.viewpoints[state.viewpoint];

  auto objects_in_view = [&](int view) {
    std::vector<int> out;
    for (int oi : house.objects_at[state.viewpoint]) {
      if (house.objects[oi].view == view) out.push_back(oi);
    }
    return out;
  };

  for (int nb : house.neighbors[state.viewpoint]) {
    const auto& to = house.viewpoints[nb];
    Candidate c;
    c.target = nb;
    const double bearing = bearing_between(cur.position, to.position);
    c.phi = elevation_between(cur.position, to.position);
    c.theta = norm_angle(bearing - state.heading);
    c.orientation = {static_cast<float>(std::sin(c.theta)), static_cast<float>(std::cos(c.theta)),
                     static_cast<float>(std::sin(c.phi)), static_cast<float>(std::cos(c.phi))};
    c.view = view_index(bearing, c.phi);
    c.object_indices = objects_in_view(c.view);
    c.dir_bin = direction_bin(c.theta);
    obs.candidates.push_back(std::move(c));
  }

  // The current location joins the candidate set as the STOP action: zero
  // relative orientation, objects of the view straight ahead at eye level.
  Candidate stop;
  stop.target = state.viewpoint;
  stop.is_stop = true;
  stop.theta = 0.0;
  stop.phi = 0.0;
  stop.orientation = {0.0f, 1.0f, 0.0f, 1.0f};
  stop.view = view_index(state.heading, 0.0);
  stop.object_indices = objects_in_view(stop.view);
  stop.dir_bin = DirectionBin::kFront;
  obs.candidates.push_back(std::move(stop));
  obs.stop_index = static_cast<int>(obs.candidates.size()) - 1;

  if (state.viewpoint == episode.goal) {
    obs.teacher_action = obs.stop_index;
    obs.next_room = cur.room_type;
  } else {
    const int next = next_hop(house, state.viewpoint, episode.goal);
    obs.teacher_action = -1;
    for (size_t i = 0; i < obs.candidates.size(); ++i) {
      if (!obs.candidates[i].is_stop && obs.candidates[i].target == next) {
        obs.teacher_action = static_cast<int>(i);
        break;
      }
    }
    obs.next_room = house.viewpoints[next].room_type;
  }
  obs.teacher_progress = teacher_progress(house, episode, state);
  return obs;
}

int teacher_action(const House& house, const Episode& episode, const AgentState& state) {
  return observe(house, episode, state).teacher_action;
}

AgentState apply_action(const House& house, const AgentState& state, const Candidate& candidate) {
  if (candidate.is_stop) return state;
  const auto& from = house.viewpoints[state.viewpoint].position;
  const auto& to = house.viewpoints[candidate.target].position;
  return {candidate.target, bearing_between(from, to)};
}

float teacher_progress(const House& house, const Episode& episode, const AgentState& state) {
  const double d0 = shortest_distance(house, episode.start, episode.goal);
  if (d0 <= 0.0) throw std::invalid_argument("teacher_progress: start coincides with goal");
  const double dt = shortest_distance(house, state.viewpoint, episode.goal);
  const double p = 1.0 - dt / d0;
  return static_cast<float>(std::clamp(p, 0.0, 1.0));
}

// ---- shortest paths ----

std::vector<double> shortest_distances_from(const House& house, int src) {
  const int n = static_cast<int>(house.viewpoints.size());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  dist[src] = 0.0;
  std::set<std::pair<double, int>> queue{{0.0, src}};
  while (!queue.empty()) {
    const auto [d, v] = *queue.begin();
    queue.erase(queue.begin());
    for (int nb : house.neighbors[v]) {
      const double nd = d + house.edge_length(v, nb);
      if (nd < dist[nb] - 1e-12) {
        queue.erase({dist[nb], nb});
        dist[nb] = nd;
        queue.insert({nd, nb});
      }
    }
  }
  return dist;
}

double shortest_distance(const House& house, int a, int b) {
  if (a < 0 || b < 0 || a >= static_cast<int>(house.viewpoints.size()) ||
      b >= static_cast<int>(house.viewpoints.size())) {
    throw std::invalid_argument("shortest_distance: viewpoint out of range");
  }
  if (a == b) return 0.0;
  return shortest_distances_from(house, a)[b];
}

std::vector<int> shortest_path(const House& house, int a, int b) {
  std::vector<int> path{a};
  int cur = a;
  const int n = static_cast<int>(house.viewpoints.size());
  for (int guard = 0; cur != b && guard < n + 1; ++guard) {
    cur = next_hop(house, cur, b);
    path.push_back(cur);
  }
  if (cur != b) throw std::runtime_error("shortest_path: failed to reach goal");
  return path;
}

// ---- serialization ----

namespace {

json house_json(const House& h) {
  json j;
  j["id"] = h.id;
  json vps = json::array();
  for (const auto& vp : h.viewpoints) {
    vps.push_back({{"id", vp.id},
                   {"position", {vp.position[0], vp.position[1], vp.position[2]}},
                   {"room", vp.room_type}});
  }
  j["viewpoints"] = std::move(vps);
  json es = json::array();
  for (size_t i = 0; i < h.edges.size(); ++i) {
    es.push_back({{"a", h.edges[i][0]}, {"b", h.edges[i][1]}, {"length", h.edge_lengths[i]}});
  }
  j["edges"] = std::move(es);
  json os = json::array();
  for (const auto& o : h.objects) {
    os.push_back({{"viewpoint", o.viewpoint},
                  {"view", o.view},
                  {"category", o.category},
                  {"box", o.box},
                  {"feature", o.feature}});
  }
  j["objects"] = std::move(os);
  return j;
}

House house_from_json(const json& j) {
  House h;
  h.id = j.at("id").get<std::string>();
  for (const auto& v : j.at("viewpoints")) {
    Viewpoint vp;
    vp.id = v.at("id").get<int>();
    const auto& p = v.at("position");
    vp.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
    vp.room_type = v.at("room").get<int>();
    h.viewpoints.push_back(vp);
  }
  for (const auto& e : j.at("edges")) {
    h.edges.push_back({e.at("a").get<int>(), e.at("b").get<int>()});
    h.edge_lengths.push_back(e.at("length").get<double>());
  }
  for (const auto& o : j.at("objects")) {
    ObjectPlacement obj;
    obj.viewpoint = o.at("viewpoint").get<int>();
    obj.view = o.at("view").get<int>();
    obj.category = o.at("category").get<int>();
    const auto& box = o.at("box");
    for (int i = 0; i < 7; ++i) obj.box[i] = box.at(i).get<float>();
    obj.feature = o.at("feature").get<std::vector<float>>();
    h.objects.push_back(std::move(obj));
  }
  h.rebuild_indexes();
  return h;
}

json episode_json(const Episode& e) {
  return json{{"id", e.id},
              {"house", e.house_id},
              {"start", e.start},
              {"start_heading", e.start_heading},
              {"goal", e.goal},
              {"target_object", e.target_object},
              {"goal_room", e.goal_room},
              {"instruction", e.instruction},
              {"instruction_text", e.instruction_text},
              {"path", e.path}};
}

Episode episode_from_json(const json& j) {
  Episode e;
  e.id = j.at("id").get<std::string>();
  e.house_id = j.at("house").get<std::string>();
  e.start = j.at("start").get<int>();
  e.start_heading = j.at("start_heading").get<double>();
  e.goal = j.at("goal").get<int>();
  e.target_object = j.at("target_object").get<int>();
  e.goal_room = j.at("goal_room").get<int>();
  e.instruction = j.at("instruction").get<std::vector<int>>();
  e.instruction_text = j.at("instruction_text").get<std::string>();
  e.path = j.at("path").get<std::vector<int>>();
  return e;
}

json config_json(const WorldSetConfig& c) {
  return json{{"num_viewpoints", c.num_viewpoints},
              {"num_rooms", c.num_rooms},
              {"room_taxonomy_size", c.room_taxonomy_size},
              {"objects_per_view", c.objects_per_view},
              {"num_object_categories", c.num_object_categories},
              {"object_feature_dim", c.object_feature_dim},
              {"edge_density", c.edge_density},
              {"viewpoint_spacing_m", c.viewpoint_spacing_m},
              {"min_path_len", c.min_path_len},
              {"max_path_len", c.max_path_len},
              {"max_instruction_tokens", c.max_instruction_tokens},
              {"num_houses_train", c.num_houses_train},
              {"num_houses_val_unseen", c.num_houses_val_unseen},
              {"episodes_train", c.episodes_train},
              {"episodes_val_seen", c.episodes_val_seen},
              {"episodes_val_unseen", c.episodes_val_unseen}};
}

WorldSetConfig config_from_json(const json& j) {
  WorldSetConfig c;
  c.num_viewpoints = j.at("num_viewpoints").get<int>();
  c.num_rooms = j.at("num_rooms").get<int>();
  c.room_taxonomy_size = j.at("room_taxonomy_size").get<int>();
  c.objects_per_view = j.at("objects_per_view").get<int>();
  c.num_object_categories = j.at("num_object_categories").get<int>();
  c.object_feature_dim = j.at("object_feature_dim").get<int>();
  c.edge_density = j.at("edge_density").get<double>();
  c.viewpoint_spacing_m = j.at("viewpoint_spacing_m").get<double>();
  c.min_path_len = j.at("min_path_len").get<int>();
  c.max_path_len = j.at("max_path_len").get<int>();
  c.max_instruction_tokens = j.at("max_instruction_tokens").get<int>();
  c.num_houses_train = j.at("num_houses_train").get<int>();
  c.num_houses_val_unseen = j.at("num_houses_val_unseen").get<int>();
  c.episodes_train = j.at("episodes_train").get<int>();
  c.episodes_val_seen = j.at("episodes_val_seen").get<int>();
  c.episodes_val_unseen = j.at("episodes_val_unseen").get<int>();
  return c;
}

json lexicon_json(const Lexicon& lex) {
  return json{{"room_types", lex.room_types},
              {"categories", lex.categories},
              {"category_room", lex.category_room},
              {"vocab", lex.vocab.words}};
}

Lexicon lexicon_from_json(const json& j) {
  Lexicon lex;
  lex.room_types = j.at("room_types").get<std::vector<std::string>>();
  lex.categories = j.at("categories").get<std::vector<std::string>>();
  lex.category_room = j.at("category_room").get<std::vector<int>>();
  lex.vocab.words = j.at("vocab").get<std::vector<std::string>>();
  lex.vocab.rebuild_index();
  return lex;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  in >> j;
  return j;
}

}  // namespace

std::string house_to_json(const House& h) { return house_json(h).dump(); }

const House& WorldSet::house(const std::string& id) const {
  for (const auto& h : houses_train) {
    if (h.id == id) return h;
  }
  for (const auto& h : houses_unseen) {
    if (h.id == id) return h;
  }
  throw std::invalid_argument("world set: unknown house '" + id + "'");
}

const std::vector<Episode>& WorldSet::split(const std::string& name) const {
  if (name == "train") return episodes_train;
  if (name == "val_seen") return episodes_val_seen;
  if (name == "val_unseen") return episodes_val_unseen;
  throw std::invalid_argument("world set: unknown split '" + name +
                              "' (expected train, val_seen or val_unseen)");
}

const Episode* WorldSet::find_episode(const std::string& id) const {
  for (const auto* eps : {&episodes_train, &episodes_val_seen, &episodes_val_unseen}) {
    for (const auto& e : *eps) {
      if (e.id == id) return &e;
    }
  }
  return nullptr;
}

void WorldSet::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto world_file = [&](const std::string& split_name, const std::vector<House>& houses) {
    json j;
    j["format"] = "seqnav.world.v1";
    j["split"] = split_name;
    j["seed"] = seed;
    j["config"] = config_json(config);
    j["lexicon"] = lexicon_json(lexicon);
    json hs = json::array();
    for (const auto& h : houses) hs.push_back(house_json(h));
    j["houses"] = std::move(hs);
    write_file(fs::path(dir) / (split_name + ".world.json"), j.dump());
  };
  auto episode_file = [&](const std::string& split_name, const std::vector<Episode>& eps) {
    json j;
    j["format"] = "seqnav.episodes.v1";
    j["split"] = split_name;
    json es = json::array();
    for (const auto& e : eps) es.push_back(episode_json(e));
    j["episodes"] = std::move(es);
    write_file(fs::path(dir) / (split_name + ".episodes.json"), j.dump());
  };
  world_file("train", houses_train);
  world_file("val_unseen", houses_unseen);
  episode_file("train", episodes_train);
  episode_file("val_seen", episodes_val_seen);
  episode_file("val_unseen", episodes_val_unseen);
}

WorldSet WorldSet::load(const std::string& dir) {
  namespace fs = std::filesystem;
  WorldSet ws;
  const json train = read_json_file(fs::path(dir) / "train.world.json");
  if (train.at("format").get<std::string>() != "seqnav.world.v1") {
    throw std::runtime_error("unexpected world format in " + dir);
  }
  ws.seed = train.at("seed").get<uint64_t>();
  ws.config = config_from_json(train.at("config"));
  ws.lexicon = lexicon_from_json(train.at("lexicon"));
  for (const auto& hj : train.at("houses")) ws.houses_train.push_back(house_from_json(hj));
  const json unseen = read_json_file(fs::path(dir) / "val_unseen.world.json");
  for (const auto& hj : unseen.at("houses")) ws.houses_unseen.push_back(house_from_json(hj));
  auto load_eps = [&](const std::string& split_name, std::vector<Episode>& out) {
    const json j = read_json_file(fs::path(dir) / (split_name + ".episodes.json"));
    if (j.at("format").get<std::string>() != "seqnav.episodes.v1") {
      throw std::runtime_error("unexpected episode format in " + dir);
    }
    for (const auto& e : j.at("episodes")) out.push_back(episode_from_json(e));
  };
  load_eps("train", ws.episodes_train);
  load_eps("val_seen", ws.episodes_val_seen);
  load_eps("val_unseen", ws.episodes_val_unseen);
  for (const auto& h : ws.houses_train) h.validate();
  for (const auto& h : ws.houses_unseen) h.validate();
  return ws;
}

WorldSet generate_world_set(uint64_t seed, const WorldSetConfig& cfg) {
  cfg.validate();
  if (cfg.num_houses_train < 1 || cfg.num_houses_val_unseen < 0) {
    throw std::invalid_argument("world config: house counts malformed");
  }
  WorldSet ws;
  ws.config = cfg;
  ws.seed = seed;
  ws.lexicon = Lexicon::build(cfg.room_taxonomy_size, cfg.num_object_categories);
  for (int i = 0; i < cfg.num_houses_train; ++i) {
    ws.houses_train.push_back(generate_house(RngStream::mix(seed, kHouseSalt + i), cfg,
                                             ws.lexicon, format_id("h_train_", i, 3)));
  }
  for (int i = 0; i < cfg.num_houses_val_unseen; ++i) {
    ws.houses_unseen.push_back(generate_house(RngStream::mix(seed, kUnseenSalt + i), cfg,
                                              ws.lexicon, format_id("h_unseen_", i, 3)));
  }
  auto make_episodes = [&](const std::vector<House>& houses, int count,
                           const std::string& prefix, uint64_t salt) {
    std::vector<Episode> eps;
    for (int e = 0; e < count; ++e) {
      const House& h = houses[e % houses.size()];
      uint64_t ep_seed = RngStream::mix(seed, RngStream::mix(salt, e));
      // A house may lack a valid pair for a particular draw; retry with a
      // perturbed seed before giving up.
      for (int retry = 0;; ++retry) {
        try {
          eps.push_back(sample_episode(h, ep_seed, cfg, ws.lexicon,
                                       format_id("ep_" + prefix + "_", e, 5)));
          break;
        } catch (const std::runtime_error&) {
          if (retry >= 20) throw;
          ep_seed = RngStream::mix(ep_seed, 0xA5A5A5A5ULL);
        }
      }
    }
    return eps;
  };
  ws.episodes_train = make_episodes(ws.houses_train, cfg.episodes_train, "train", kEpisodeSalt);
  ws.episodes_val_seen =
      make_episodes(ws.houses_train, cfg.episodes_val_seen, "val_seen", kEpisodeSalt + 1);
  if (!ws.houses_unseen.empty()) {
    ws.episodes_val_unseen =
        make_episodes(ws.houses_unseen, cfg.episodes_val_unseen, "val_unseen", kEpisodeSalt + 2);
  }
  return ws;
}

}  // namespace seqnav
