#include "train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>

#include <json.hpp>

#include "core/errors.hpp"

namespace seqnav {

using nlohmann::json;

namespace {

constexpr uint64_t kTrainSalt = 0x545241494EULL;

bool timing_enabled() {
  static const bool enabled = []() {
    const char* v = std::getenv("SEQNAV_TIMING");
    return v != nullptr && std::string(v) == "1";
  }();
  return enabled;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  json j{{"lambda1", cfg.lambda1},
         {"lambda2", cfg.lambda2},
         {"lambda3", cfg.lambda3},
         {"lr", cfg.lr},
         {"gamma", cfg.gamma},
         {"max_steps", cfg.max_steps},
         {"batch_size", cfg.batch_size},
         {"epochs", cfg.epochs},
         {"seed", cfg.seed},
         {"success_threshold_m", cfg.success_threshold_m},
         {"step_reward", cfg.step_reward},
         {"terminal_reward", cfg.terminal_reward},
         {"grad_clip", cfg.grad_clip},
         {"weight_decay", cfg.weight_decay},
         {"adam_beta1", cfg.adam_beta1},
         {"adam_beta2", cfg.adam_beta2},
         {"adam_eps", cfg.adam_eps},
         {"entropy_weight", cfg.entropy_weight},
         {"use_direction_loss", cfg.use_direction_loss},
         {"val_split", cfg.val_split}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& s) {
  const json j = json::parse(s);
  TrainConfig cfg;
  cfg.lambda1 = j.at("lambda1").get<float>();
  cfg.lambda2 = j.at("lambda2").get<float>();
  cfg.lambda3 = j.at("lambda3").get<float>();
  cfg.lr = j.at("lr").get<float>();
  cfg.gamma = j.at("gamma").get<float>();
  cfg.max_steps = j.at("max_steps").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.success_threshold_m = j.at("success_threshold_m").get<float>();
  cfg.step_reward = j.at("step_reward").get<float>();
  cfg.terminal_reward = j.at("terminal_reward").get<float>();
  cfg.grad_clip = j.at("grad_clip").get<float>();
  cfg.weight_decay = j.at("weight_decay").get<float>();
  cfg.adam_beta1 = j.at("adam_beta1").get<float>();
  cfg.adam_beta2 = j.at("adam_beta2").get<float>();
  cfg.adam_eps = j.at("adam_eps").get<float>();
  cfg.entropy_weight = j.at("entropy_weight").get<float>();
  cfg.use_direction_loss = j.at("use_direction_loss").get<bool>();
  cfg.val_split = j.at("val_split").get<std::string>();
  cfg.validate();
  return cfg;
}

Trainer::Trainer(OristModel& model, const WorldSet& worlds, TrainConfig cfg)
    : model_(model),
      worlds_(worlds),
      cfg_(cfg),
      opt_(model.parameter_tensors(),
           AdamWConfig{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay}) {
  cfg_.validate();
  // Instruction plus the largest per-view object set must fit the model's
  // sequence budget.
  int max_instr = 0;
  for (const Episode& e : worlds_.episodes_train) {
    max_instr = std::max(max_instr, static_cast<int>(e.instruction.size()));
  }
  int max_objects = 0;
  auto scan = [&](const std::vector<House>& houses) {
    for (const House& h : houses) {
      std::vector<int> per_view(static_cast<size_t>(h.viewpoints.size()) * kViewsPerPanorama, 0);
      for (const auto& o : h.objects) {
        max_objects = std::max(max_objects, ++per_view[o.viewpoint * kViewsPerPanorama + o.view]);
      }
    }
  };
  scan(worlds_.houses_train);
  scan(worlds_.houses_unseen);
  const int needed = max_instr + 2 + max_objects + 1;
  if (needed > model_.config().max_tokens) {
    throw ConfigError("train: longest candidate sequence needs " + std::to_string(needed) +
                      " tokens (" + std::to_string(max_instr) + " instruction words, " +
                      std::to_string(max_objects) + " objects) but model max_tokens is " +
                      std::to_string(model_.config().max_tokens));
  }
}

std::string Trainer::trainer_state_json() const {
  json j{{"epoch", completed_epochs_},
         {"optimizer_steps", opt_.step_count()},
         {"train_config", json::parse(train_config_to_json(cfg_))}};
  return j.dump();
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ckpt;
  ckpt.header_json = make_checkpoint_header(model_.config(), trainer_state_json());
  append_model_blocks(model_, ckpt);
  const auto& params = model_.parameters();
  AdamW& opt = const_cast<AdamW&>(opt_);
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.blocks.push_back({"adamw.m." + params[i].first, params[i].second.shape(),
                           opt.first_moment(i)});
    ckpt.blocks.push_back({"adamw.v." + params[i].first, params[i].second.shape(),
                           opt.second_moment(i)});
  }
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  load_model_blocks(model_, ckpt);
  const std::string state = checkpoint_trainer_state(ckpt);
  if (state.empty()) return;
  const json j = json::parse(state);
  completed_epochs_ = j.at("epoch").get<int>();
  opt_.set_step_count(j.at("optimizer_steps").get<uint64_t>());
  const auto& params = model_.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    const NamedBlock* m = ckpt.find("adamw.m." + params[i].first);
    const NamedBlock* v = ckpt.find("adamw.v." + params[i].first);
    if (m != nullptr) opt_.first_moment(i) = m->data;
    if (v != nullptr) opt_.second_moment(i) = v->data;
  }
}

MetricsReport Trainer::validate(const std::string& split_name) const {
  const auto& episodes = worlds_.split(split_name);
  std::vector<TrajectoryRecord> trajectories;
  trajectories.reserve(episodes.size());
  for (const Episode& ep : episodes) {
    trajectories.push_back(
        greedy_rollout(model_, worlds_.house(ep.house_id), ep, cfg_.max_steps, "r2r"));
  }
  return evaluate(trajectories, worlds_, cfg_.success_threshold_m);
}

void Trainer::run(const std::function<void(const std::string&)>& on_epoch) {
  const auto& train_eps = worlds_.episodes_train;
  if (train_eps.empty()) throw ConfigError("train: no training episodes");
  RngStream rng(RngStream::mix(cfg_.seed, kTrainSalt));
  int consecutive_bad = 0;

  for (int epoch = completed_epochs_ + 1; epoch <= cfg_.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream epoch_rng = rng.fork(static_cast<uint64_t>(epoch));
    std::vector<int> order(train_eps.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    epoch_rng.shuffle(order);

    double il_total = 0, il_action = 0, il_dir = 0, il_rn = 0, il_rg = 0, il_prog = 0;
    double rl_total = 0, rl_policy = 0, rl_value = 0;
    int batches = 0;

    for (size_t at = 0; at < order.size(); at += cfg_.batch_size) {
      const size_t end = std::min(order.size(), at + cfg_.batch_size);
      Tensor batch_loss = Tensor::scalar(0.0f);
      double b_il = 0, b_ia = 0, b_id = 0, b_irn = 0, b_irg = 0, b_ip = 0;
      double b_rl = 0, b_rp = 0, b_rv = 0;
      for (size_t i = at; i < end; ++i) {
        const Episode& ep = train_eps[order[i]];
        const House& house = worlds_.house(ep.house_id);
        ILLoss il = imitation_loss(teacher_rollout(model_, house, ep, cfg_), cfg_);
        RolloutRecord rl = sampled_rollout(model_, house, ep, cfg_, epoch_rng);
        A2CLoss a2c = a2c_loss(rl, cfg_.gamma, cfg_);
        batch_loss = add(batch_loss, total_loss(a2c.total, il.total, cfg_.lambda3));
        b_il += il.total.item();
        b_ia += il.action;
        b_id += il.direction;
        b_irn += il.room_next;
        b_irg += il.room_goal;
        b_ip += il.progress;
        b_rl += a2c.total.item();
        b_rp += a2c.policy.item();
        b_rv += a2c.value.item();
      }
      const float inv = 1.0f / static_cast<float>(end - at);
      batch_loss = scale(batch_loss, inv);
      if (!std::isfinite(batch_loss.item())) {
        ++skipped_;
        if (++consecutive_bad >= 10) {
          throw NumericError("train: 10 consecutive non-finite batches; aborting");
        }
        opt_.zero_grad();
        continue;
      }
      consecutive_bad = 0;
      batch_loss.backward();
      const float norm = clip_grad_norm(opt_.params(), cfg_.grad_clip);
      if (norm > cfg_.grad_clip) {
        ++clip_events_;
        debug_log("train: gradient norm " + std::to_string(norm) + " clipped");
      }
      if (!opt_.step()) ++skipped_;
      opt_.zero_grad();

      il_total += b_il * inv;
      il_action += b_ia * inv;
      il_dir += b_id * inv;
      il_rn += b_irn * inv;
      il_rg += b_irg * inv;
      il_prog += b_ip * inv;
      rl_total += b_rl * inv;
      rl_policy += b_rp * inv;
      rl_value += b_rv * inv;
      ++batches;
    }

    completed_epochs_ = epoch;
    MetricsReport val;
    if (!worlds_.split(cfg_.val_split).empty()) val = validate(cfg_.val_split);

    const double div = std::max(1, batches);
    double wall = 0.0;
    if (timing_enabled()) {
      wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    json line{{"epoch", epoch},
              {"il_total", il_total / div},
              {"il_action", il_action / div},
              {"il_direction", il_dir / div},
              {"il_room_next", il_rn / div},
              {"il_room_goal", il_rg / div},
              {"il_progress", il_prog / div},
              {"rl_total", rl_total / div},
              {"rl_policy", rl_policy / div},
              {"rl_value", rl_value / div},
              {"val_sr", val.sr},
              {"val_spl", val.spl},
              {"val_gp", val.gp},
              {"wall_time_s", wall},
              {"grad_clip_events", clip_events_},
              {"skipped_steps", skipped_}};
    on_epoch(line.dump());
  }
}

}  // namespace seqnav
