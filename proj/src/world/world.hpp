#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"

namespace seqnav {

// Quarter of the circle around the agent's heading.
enum class DirectionBin { kFront = 0, kRight = 1, kBack = 2, kLeft = 3 };

// theta is the candidate bearing relative to the agent heading, radians.
// FRONT = [315, 45), RIGHT = [45, 135), BACK = [135, 225), LEFT = [225, 315).
DirectionBin direction_bin(double theta);
const char* direction_word(DirectionBin bin);

double norm_angle(double a);  // wraps into [0, 2*pi)

// Panorama geometry: 12 headings x 3 elevations. The column comes from the
// absolute bearing, the row from the elevation angle (below -30deg, level,
// above +30deg).
int view_index(double bearing, double phi);
constexpr int kViewsPerPanorama = 36;

struct Viewpoint {
  int id = 0;
  std::array<double, 3> position{};  // meters
  int room_type = 0;                 // index into the room taxonomy
};

struct ObjectPlacement {
  int viewpoint = 0;
  int view = 0;  // owning view, [0, 36)
  int category = 0;
  std::vector<float> feature;
  std::array<float, 7> box{};  // x1, y1, x2, y2, h, w, area
};

struct House {
  std::string id;
  std::vector<Viewpoint> viewpoints;
  std::vector<std::array<int, 2>> edges;  // a < b
  std::vector<double> edge_lengths;
  std::vector<ObjectPlacement> objects;

  // Derived adjacency, rebuilt after load/generation.
  std::vector<std::vector<int>> neighbors;         // sorted viewpoint ids
  std::vector<std::vector<int>> objects_at;        // object indices per viewpoint

  void rebuild_indexes();
  bool adjacent(int a, int b) const;
  double edge_length(int a, int b) const;
  // Throws when a structural invariant is broken (disconnected graph,
  // viewpoint without objects, view index out of range).
  void validate() const;
};

struct Episode {
  std::string id;
  std::string house_id;
  int start = 0;
  double start_heading = 0.0;  // radians
  int goal = 0;
  int target_object = 0;  // category id, present at the goal viewpoint
  int goal_room = 0;      // room type
  std::vector<int> instruction;  // token ids
  std::string instruction_text;
  std::vector<int> path;  // ground-truth shortest path, start..goal
};

struct AgentState {
  int viewpoint = 0;
  double heading = 0.0;  // radians, absolute
};

struct Candidate {
  int target = 0;  // destination viewpoint (the current one for STOP)
  bool is_stop = false;
  double theta = 0.0;  // relative bearing [0, 2*pi)
  double phi = 0.0;    // elevation angle
  std::array<float, 4> orientation{};  // sin/cos theta, sin/cos phi
  int view = 0;        // owning view in the current panorama
  std::vector<int> object_indices;  // into house.objects
  DirectionBin dir_bin = DirectionBin::kFront;
};

struct Observation {
  int step = 0;
  std::vector<Candidate> candidates;  // neighbors by ascending id, STOP last
  int stop_index = 0;
  // Teacher labels.
  int teacher_action = 0;
  int next_room = 0;
  int goal_room = 0;
  float teacher_progress = 0.0f;
};

// Closed vocabulary with fixed special tokens.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;

  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  int id(const std::string& w) const;  // throws on unknown word
  void rebuild_index();
  size_t size() const { return words.size(); }
};

// Room taxonomy, object categories and the generated vocabulary.
// Category base feature vectors are global: the same category id maps to the
// same unit vector in every house, so categories stay recognizable in unseen
// environments.
struct Lexicon {
  std::vector<std::string> room_types;
  std::vector<std::string> categories;
  std::vector<int> category_room;  // characteristic room type per category
  Vocab vocab;

  static Lexicon build(int room_taxonomy_size, int num_object_categories);
};

std::vector<float> category_base_feature(int category, int dim);

struct WorldGenConfig {
  int num_viewpoints = 12;
  int num_rooms = 4;
  int room_taxonomy_size = 8;
  int objects_per_view = 3;  // objects placed per viewpoint panorama
  int num_object_categories = 24;
  int object_feature_dim = 64;
  double edge_density = 0.3;
  double viewpoint_spacing_m = 4.0;
  int min_path_len = 1;  // hops
  int max_path_len = 3;
  int max_instruction_tokens = 44;

  void validate() const;  // throws on unsatisfiable settings
};

House generate_house(uint64_t seed, const WorldGenConfig& cfg, const Lexicon& lex,
                     std::string house_id);
Episode sample_episode(const House& house, uint64_t seed, const WorldGenConfig& cfg,
                       const Lexicon& lex, std::string episode_id);

Observation observe(const House& house, const Episode& episode, const AgentState& state);
int teacher_action(const House& house, const Episode& episode, const AgentState& state);
float teacher_progress(const House& house, const Episode& episode, const AgentState& state);

// STOP leaves the state unchanged; a move lands on the candidate's target
// with the heading of the motion.
AgentState apply_action(const House& house, const AgentState& state, const Candidate& candidate);

// Weighted geodesic over the navigation graph (Dijkstra, deterministic
// tie-break on viewpoint id).
double shortest_distance(const House& house, int a, int b);
std::vector<double> shortest_distances_from(const House& house, int src);
std::vector<int> shortest_path(const House& house, int a, int b);

// The full generated artifact: houses plus episode splits.
struct WorldSetConfig : WorldGenConfig {
  int num_houses_train = 20;
  int num_houses_val_unseen = 5;
  int episodes_train = 200;
  int episodes_val_seen = 40;
  int episodes_val_unseen = 50;
};

struct WorldSet {
  WorldSetConfig config;
  uint64_t seed = 0;
  Lexicon lexicon;
  std::vector<House> houses_train;
  std::vector<House> houses_unseen;
  std::vector<Episode> episodes_train;
  std::vector<Episode> episodes_val_seen;
  std::vector<Episode> episodes_val_unseen;

  const House& house(const std::string& id) const;
  const std::vector<Episode>& split(const std::string& name) const;
  const Episode* find_episode(const std::string& id) const;

  void save(const std::string& dir) const;
  static WorldSet load(const std::string& dir);
};

WorldSet generate_world_set(uint64_t seed, const WorldSetConfig& cfg);

std::string house_to_json(const House& h);  // canonical serialization

}  // namespace seqnav
