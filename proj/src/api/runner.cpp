#include "api/runner.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "core/errors.hpp"
#include "train/rollout.hpp"

namespace seqnav {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kModelSalt = 0x4D4F44454CULL;

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

ModelConfig complete_model_config(const RunConfig& cfg, const WorldSet& worlds) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(worlds.lexicon.vocab.size());
  mc.room_taxonomy_size = static_cast<int>(worlds.lexicon.room_types.size());
  mc.object_feature_dim = worlds.config.object_feature_dim;
  mc.validate();
  return mc;
}

void check_model_worlds_compat(const ModelConfig& mc, const WorldSet& worlds) {
  std::string conflicts;
  auto check = [&](const std::string& name, int model_v, int world_v) {
    if (model_v != world_v) {
      conflicts += " " + name + " (checkpoint " + std::to_string(model_v) + ", worlds " +
                   std::to_string(world_v) + ")";
    }
  };
  check("vocab_size", mc.vocab_size, static_cast<int>(worlds.lexicon.vocab.size()));
  check("room_taxonomy_size", mc.room_taxonomy_size,
        static_cast<int>(worlds.lexicon.room_types.size()));
  check("object_feature_dim", mc.object_feature_dim, worlds.config.object_feature_dim);
  if (!conflicts.empty()) {
    throw ConfigError("checkpoint is incompatible with the worlds:" + conflicts);
  }
}

fs::path trajectories_path(const fs::path& report_path) {
  fs::path p = report_path;
  p.replace_extension();
  p += ".trajectories.jsonl";
  return p;
}

}  // namespace

int worker_count() {
  const char* v = std::getenv("SEQNAV_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

WorldSet runner_generate_worlds(const RunConfig& cfg) {
  try {
    return generate_world_set(cfg.seed, cfg.world);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void runner_train(const RunConfig& cfg, const WorldSet& worlds, const std::string& out_dir,
                  const std::string& resume_checkpoint) {
  const ModelConfig mc = complete_model_config(cfg, worlds);
  OristModel model(mc, RngStream::mix(cfg.seed, kModelSalt));
  Trainer trainer(model, worlds, cfg.train);
  if (!resume_checkpoint.empty()) {
    const Checkpoint ckpt = Checkpoint::load(resume_checkpoint);
    const ModelConfig stored = checkpoint_model_config(ckpt);
    if (model_config_to_json(stored) != model_config_to_json(mc)) {
      throw ConfigError("resume: checkpoint model config differs from the run config");
    }
    trainer.restore(ckpt);
  }

  fs::create_directories(out_dir);
  write_text_file(fs::path(out_dir) / "run_config.json", run_config_to_json(cfg));
  const fs::path log_path = fs::path(out_dir) / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) throw IoError("cannot write " + log_path.string());

  trainer.run([&](const std::string& line) {
    log << line << "\n";
    log.flush();
  });
  trainer.make_checkpoint().save((fs::path(out_dir) / "checkpoint.orst").string());
}

LoadedModel runner_open_model(const std::string& checkpoint_path) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  LoadedModel lm;
  lm.model = std::make_unique<OristModel>(checkpoint_model_config(ckpt), 0);
  load_model_blocks(*lm.model, ckpt);
  const std::string state = checkpoint_trainer_state(ckpt);
  if (!state.empty()) {
    lm.train_cfg = train_config_from_json(json::parse(state).at("train_config").dump());
  }
  return lm;
}

std::string runner_evaluate(const LoadedModel& lm, const WorldSet& worlds,
                            const std::string& split, const std::string& mode,
                            const std::string& report_path) {
  if (mode != "r2r" && mode != "reverie" && mode != "ndh") {
    throw ConfigError("eval: mode must be r2r, reverie or ndh, got '" + mode + "'");
  }
  check_model_worlds_compat(lm.model->config(), worlds);
  const std::vector<Episode>* episodes = nullptr;
  try {
    episodes = &worlds.split(split);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  std::vector<TrajectoryRecord> trajectories(episodes->size());
  const int threads = std::min<int>(worker_count(), std::max<size_t>(episodes->size(), 1));
  auto work = [&](int worker) {
    for (size_t i = worker; i < episodes->size(); i += threads) {
      const Episode& ep = (*episodes)[i];
      trajectories[i] =
          greedy_rollout(*lm.model, worlds.house(ep.house_id), ep, lm.train_cfg.max_steps, mode);
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  const MetricsReport report =
      evaluate(trajectories, worlds, lm.train_cfg.success_threshold_m);
  const std::string report_json = report.to_json();
  if (!report_path.empty()) {
    if (fs::path(report_path).has_parent_path()) {
      fs::create_directories(fs::path(report_path).parent_path());
    }
    std::string lines;
    for (const auto& t : trajectories) lines += trajectory_to_json(t) + "\n";
    write_text_file(trajectories_path(report_path), lines);
    write_text_file(report_path, report_json + "\n");
  }
  return report_json;
}

namespace {

// Collects every head's attention matrix for one encode_step call.
class StepAttention : public AttentionSink {
 public:
  StepAttention(int candidates, int layers, int heads)
      : layers_(layers), heads_(heads), mats_(static_cast<size_t>(candidates) * layers * heads) {}

  void on_attention(int candidate, int layer, int head, const float* probs,
                    int seq_len) override {
    auto& m = mats_[(static_cast<size_t>(candidate) * layers_ + layer) * heads_ + head];
    m.assign(probs, probs + static_cast<size_t>(seq_len) * seq_len);
    seq_len_ = seq_len;
  }

  const std::vector<float>& matrix(int candidate, int layer, int head) const {
    return mats_[(static_cast<size_t>(candidate) * layers_ + layer) * heads_ + head];
  }
  int seq_len() const { return seq_len_; }

 private:
  int layers_, heads_;
  int seq_len_ = 0;
  std::vector<std::vector<float>> mats_;
};

}  // namespace

void runner_dump_attention(const LoadedModel& lm, const WorldSet& worlds,
                           const std::string& episode_id, const std::string& out_path) {
  check_model_worlds_compat(lm.model->config(), worlds);
  const Episode* ep = worlds.find_episode(episode_id);
  if (ep == nullptr) throw NotFoundError("dump-attention: unknown episode '" + episode_id + "'");
  const House& house = worlds.house(ep->house_id);
  const OristModel& model = *lm.model;
  const int layers = model.config().num_layers;
  const int heads = model.config().n_heads;

  NoGradGuard no_grad;
  json steps = json::array();
  StepState state = model.initial_state();
  AgentState agent{ep->start, ep->start_heading};
  for (int t = 0; t < lm.train_cfg.max_steps; ++t) {
    const Observation obs = observe(house, *ep, agent);
    const int g = static_cast<int>(obs.candidates.size());
    StepAttention sink(g, layers, heads);
    EncodedStep enc = model.encode_step(ep->instruction, house, obs, state, &sink);
    HeadOutputs out = model.heads(enc);
    const auto logits = out.action_logits.values();
    int action = 0;
    for (int i = 1; i < g; ++i) {
      if (logits[i] > logits[action]) action = i;
    }

    const int L = static_cast<int>(ep->instruction.size());
    const int c_len = sink.seq_len();
    json cands = json::array();
    for (int i = 0; i < g; ++i) {
      json layer_arr = json::array();
      for (int l = 0; l < layers; ++l) {
        json head_arr = json::array();
        for (int h = 0; h < heads; ++h) {
          const auto& mat = sink.matrix(i, l, h);
          json rows = json::array();
          auto add_row = [&](int query_index, const std::string& label) {
            std::vector<float> row(mat.begin() + static_cast<size_t>(query_index) * c_len,
                                   mat.begin() + static_cast<size_t>(query_index + 1) * c_len);
            rows.push_back(json{{"query", label}, {"attention", row}});
          };
          add_row(0, "[CLS]");
          for (int w = 0; w < L; ++w) {
            add_row(1 + w, worlds.lexicon.vocab.words[ep->instruction[w]]);
          }
          head_arr.push_back(json{{"head", h}, {"rows", std::move(rows)}});
        }
        layer_arr.push_back(json{{"layer", l}, {"heads", std::move(head_arr)}});
      }
      cands.push_back(json{{"index", i},
                           {"target", obs.candidates[i].target},
                           {"is_stop", obs.candidates[i].is_stop},
                           {"layers", std::move(layer_arr)}});
    }
    steps.push_back(json{{"step", t},
                         {"viewpoint", agent.viewpoint},
                         {"action", action},
                         {"seq_len", c_len},
                         {"candidates", std::move(cands)}});

    if (obs.candidates[action].is_stop) break;
    agent = apply_action(house, agent, obs.candidates[action]);
    state = model.config().temporal_context ? enc.next_state : model.initial_state();
  }

  json j{{"format", "seqnav.attention.v1"},
         {"episode", episode_id},
         {"num_layers", layers},
         {"num_heads", heads},
         {"steps", std::move(steps)}};
  if (fs::path(out_path).has_parent_path()) {
    fs::create_directories(fs::path(out_path).parent_path());
  }
  write_text_file(out_path, j.dump());
}

std::string runner_worldset_info(const WorldSet& worlds) {
  json j{{"houses_train", worlds.houses_train.size()},
         {"houses_val_unseen", worlds.houses_unseen.size()},
         {"episodes_train", worlds.episodes_train.size()},
         {"episodes_val_seen", worlds.episodes_val_seen.size()},
         {"episodes_val_unseen", worlds.episodes_val_unseen.size()},
         {"vocab_size", worlds.lexicon.vocab.size()},
         {"room_types", worlds.lexicon.room_types.size()},
         {"object_categories", worlds.lexicon.categories.size()}};
  return j.dump();
}

}  // namespace seqnav
