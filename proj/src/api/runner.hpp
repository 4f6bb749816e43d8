#pragma once

#include <memory>
#include <string>

#include "api/config.hpp"
#include "metrics/metrics.hpp"
#include "model/checkpoint.hpp"
#include "model/model.hpp"
#include "train/trainer.hpp"
#include "world/world.hpp"

namespace seqnav {

// Orchestration behind the C API and the CLI subcommands.

WorldSet runner_generate_worlds(const RunConfig& cfg);

// Trains and writes checkpoint.orst, train_log.jsonl and run_config.json to
// out_dir. resume_checkpoint may be empty.
void runner_train(const RunConfig& cfg, const WorldSet& worlds, const std::string& out_dir,
                  const std::string& resume_checkpoint);

struct LoadedModel {
  std::unique_ptr<OristModel> model;
  TrainConfig train_cfg;  // from the checkpoint's trainer state, or defaults
};

LoadedModel runner_open_model(const std::string& checkpoint_path);

// Greedy single-run evaluation over a split. Writes the MetricsReport JSON to
// report_path and the trajectories to <report stem>.trajectories.jsonl next
// to it; returns the report JSON. Worker count comes from SEQNAV_THREADS.
std::string runner_evaluate(const LoadedModel& lm, const WorldSet& worlds,
                            const std::string& split, const std::string& mode,
                            const std::string& report_path);

// Replays one episode greedily and dumps per-step, per-layer, per-head
// attention rows for [CLS] and every instruction token.
void runner_dump_attention(const LoadedModel& lm, const WorldSet& worlds,
                           const std::string& episode_id, const std::string& out_path);

std::string runner_worldset_info(const WorldSet& worlds);

int worker_count();  // SEQNAV_THREADS, default 1

}  // namespace seqnav
