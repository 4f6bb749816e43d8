#include "api/config.hpp"

#include <json.hpp>

#include "core/errors.hpp"

namespace seqnav {

using nlohmann::json;

namespace {

// Strict section reader: every key must be consumed by a registered field.
class SectionReader {
 public:
  SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      bool known = false;
      for (const char* s : seen_) known = known || key == s;
      if (!known) throw ConfigError(path_ + "." + key + ": unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<const char*> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");

  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("seed: wrong type");
      cfg.seed = value.get<uint64_t>();
    } else if (key == "task_mode") {
      if (!value.is_string()) throw ConfigError("task_mode: wrong type");
      cfg.task_mode = value.get<std::string>();
      if (cfg.task_mode != "r2r" && cfg.task_mode != "reverie" && cfg.task_mode != "ndh") {
        throw ConfigError("task_mode: expected r2r, reverie or ndh");
      }
    } else if (key == "world") {
      SectionReader r(value, "world");
      r.field("num_viewpoints", cfg.world.num_viewpoints);
      r.field("num_rooms", cfg.world.num_rooms);
      r.field("room_taxonomy_size", cfg.world.room_taxonomy_size);
      r.field("objects_per_view", cfg.world.objects_per_view);
      r.field("num_object_categories", cfg.world.num_object_categories);
      r.field("object_feature_dim", cfg.world.object_feature_dim);
      r.field("edge_density", cfg.world.edge_density);
      r.field("viewpoint_spacing_m", cfg.world.viewpoint_spacing_m);
      r.field("min_path_len", cfg.world.min_path_len);
      r.field("max_path_len", cfg.world.max_path_len);
      r.field("max_instruction_tokens", cfg.world.max_instruction_tokens);
      r.field("num_houses_train", cfg.world.num_houses_train);
      r.field("num_houses_val_unseen", cfg.world.num_houses_val_unseen);
      r.field("episodes_train", cfg.world.episodes_train);
      r.field("episodes_val_seen", cfg.world.episodes_val_seen);
      r.field("episodes_val_unseen", cfg.world.episodes_val_unseen);
      r.finish();
    } else if (key == "model") {
      SectionReader r(value, "model");
      r.field("d_h", cfg.model.d_h);
      r.field("num_layers", cfg.model.num_layers);
      r.field("n_heads", cfg.model.n_heads);
      r.field("max_tokens", cfg.model.max_tokens);
      r.field("temporal_context", cfg.model.temporal_context);
      r.finish();
    } else if (key == "train") {
      SectionReader r(value, "train");
      r.field("lambda1", cfg.train.lambda1);
      r.field("lambda2", cfg.train.lambda2);
      r.field("lambda3", cfg.train.lambda3);
      r.field("lr", cfg.train.lr);
      r.field("gamma", cfg.train.gamma);
      r.field("max_steps", cfg.train.max_steps);
      r.field("batch_size", cfg.train.batch_size);
      r.field("epochs", cfg.train.epochs);
      r.field("success_threshold_m", cfg.train.success_threshold_m);
      r.field("step_reward", cfg.train.step_reward);
      r.field("terminal_reward", cfg.train.terminal_reward);
      r.field("grad_clip", cfg.train.grad_clip);
      r.field("weight_decay", cfg.train.weight_decay);
      r.field("adam_beta1", cfg.train.adam_beta1);
      r.field("adam_beta2", cfg.train.adam_beta2);
      r.field("adam_eps", cfg.train.adam_eps);
      r.field("entropy_weight", cfg.train.entropy_weight);
      r.field("use_direction_loss", cfg.train.use_direction_loss);
      r.field("val_split", cfg.train.val_split);
      r.finish();
    } else {
      throw ConfigError(key + ": unknown field");
    }
  }
  cfg.train.seed = cfg.seed;
  try {
    cfg.world.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["task_mode"] = cfg.task_mode;
  j["world"] = {{"num_viewpoints", cfg.world.num_viewpoints},
                {"num_rooms", cfg.world.num_rooms},
                {"room_taxonomy_size", cfg.world.room_taxonomy_size},
                {"objects_per_view", cfg.world.objects_per_view},
                {"num_object_categories", cfg.world.num_object_categories},
                {"object_feature_dim", cfg.world.object_feature_dim},
                {"edge_density", cfg.world.edge_density},
                {"viewpoint_spacing_m", cfg.world.viewpoint_spacing_m},
                {"min_path_len", cfg.world.min_path_len},
                {"max_path_len", cfg.world.max_path_len},
                {"max_instruction_tokens", cfg.world.max_instruction_tokens},
                {"num_houses_train", cfg.world.num_houses_train},
                {"num_houses_val_unseen", cfg.world.num_houses_val_unseen},
                {"episodes_train", cfg.world.episodes_train},
                {"episodes_val_seen", cfg.world.episodes_val_seen},
                {"episodes_val_unseen", cfg.world.episodes_val_unseen}};
  j["model"] = {{"d_h", cfg.model.d_h},
                {"num_layers", cfg.model.num_layers},
                {"n_heads", cfg.model.n_heads},
                {"max_tokens", cfg.model.max_tokens},
                {"temporal_context", cfg.model.temporal_context}};
  j["train"] = {{"lambda1", cfg.train.lambda1},
                {"lambda2", cfg.train.lambda2},
                {"lambda3", cfg.train.lambda3},
                {"lr", cfg.train.lr},
                {"gamma", cfg.train.gamma},
                {"max_steps", cfg.train.max_steps},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"success_threshold_m", cfg.train.success_threshold_m},
                {"step_reward", cfg.train.step_reward},
                {"terminal_reward", cfg.train.terminal_reward},
                {"grad_clip", cfg.train.grad_clip},
                {"weight_decay", cfg.train.weight_decay},
                {"adam_beta1", cfg.train.adam_beta1},
                {"adam_beta2", cfg.train.adam_beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"entropy_weight", cfg.train.entropy_weight},
                {"use_direction_loss", cfg.train.use_direction_loss},
                {"val_split", cfg.train.val_split}};
  return j.dump(2);
}

}  // namespace seqnav
