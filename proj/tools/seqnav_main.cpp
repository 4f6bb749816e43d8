// seqnav CLI: world generation, training, evaluation and attention dumps
// over the shared-library C API.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "seqnav/seqnav.h"

namespace {

// 0 success, 2 usage/config/file problems, 3 numeric failures.
int exit_code(seqnav_status s) {
  switch (s) {
    case SEQNAV_OK:
      return 0;
    case SEQNAV_ERR_INVALID_ARG:
    case SEQNAV_ERR_IO:
    case SEQNAV_ERR_NOT_FOUND:
      return 2;
    case SEQNAV_ERR_NUMERIC:
    case SEQNAV_ERR_INTERNAL:
      return 3;
  }
  return 3;
}

int fail(seqnav_status s) {
  std::cerr << "error (" << seqnav_status_name(s) << "): " << seqnav_last_error() << "\n";
  return exit_code(s);
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

struct WorldsetDeleter {
  void operator()(seqnav_worldset* p) const { seqnav_worldset_free(p); }
};
struct ModelDeleter {
  void operator()(seqnav_model* p) const { seqnav_model_free(p); }
};
using WorldsetPtr = std::unique_ptr<seqnav_worldset, WorldsetDeleter>;
using ModelPtr = std::unique_ptr<seqnav_model, ModelDeleter>;

int open_worlds(const std::string& dir, WorldsetPtr& out) {
  seqnav_worldset* raw = nullptr;
  if (seqnav_status s = seqnav_worldset_open(dir.c_str(), &raw); s != SEQNAV_OK) return fail(s);
  out.reset(raw);
  return 0;
}

int open_model(const std::string& path, ModelPtr& out) {
  seqnav_model* raw = nullptr;
  if (seqnav_status s = seqnav_model_open(path.c_str(), &raw); s != SEQNAV_OK) return fail(s);
  out.reset(raw);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqnav — instruction-following navigation in generated graph worlds"};
  app.require_subcommand(1);

  std::string config_path, out_path, worlds_dir, checkpoint_path, resume_path;
  std::string split = "val_unseen", mode = "r2r", episode_id;

  auto* gen = app.add_subcommand("gen-world", "Generate houses and episode splits");
  gen->add_option("--config", config_path, "Run config JSON file")->required();
  gen->add_option("--out", out_path, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the agent on generated worlds");
  train->add_option("--config", config_path, "Run config JSON file")->required();
  train->add_option("--worlds", worlds_dir, "World directory from gen-world")->required();
  train->add_option("--out", out_path, "Output directory")->required();
  train->add_option("--resume", resume_path, "Checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--worlds", worlds_dir, "World directory")->required();
  eval->add_option("--split", split, "train, val_seen or val_unseen");
  eval->add_option("--mode", mode, "Success rule: r2r, reverie or ndh");
  eval->add_option("--out", out_path, "Metrics report path (.json)")->required();

  auto* dump = app.add_subcommand("dump-attention", "Dump per-step attention for one episode");
  dump->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  dump->add_option("--worlds", worlds_dir, "World directory")->required();
  dump->add_option("--episode", episode_id, "Episode id")->required();
  dump->add_option("--out", out_path, "Output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    std::string config_text;
    if (!read_file(config_path, config_text)) {
      std::cerr << "error: cannot read config file " << config_path << "\n";
      return 2;
    }
    seqnav_worldset* raw = nullptr;
    if (seqnav_status s = seqnav_worldset_generate(config_text.c_str(), &raw); s != SEQNAV_OK) {
      return fail(s);
    }
    WorldsetPtr ws(raw);
    if (seqnav_status s = seqnav_worldset_save(ws.get(), out_path.c_str()); s != SEQNAV_OK) {
      return fail(s);
    }
    char* info = nullptr;
    if (seqnav_worldset_info(ws.get(), &info) == SEQNAV_OK && info != nullptr) {
      std::cout << info << "\n";
      seqnav_string_free(info);
    }
    return 0;
  }

  if (train->parsed()) {
    std::string config_text;
    if (!read_file(config_path, config_text)) {
      std::cerr << "error: cannot read config file " << config_path << "\n";
      return 2;
    }
    WorldsetPtr ws;
    if (int rc = open_worlds(worlds_dir, ws); rc != 0) return rc;
    const char* resume = resume_path.empty() ? nullptr : resume_path.c_str();
    if (seqnav_status s = seqnav_train(config_text.c_str(), ws.get(), out_path.c_str(), resume);
        s != SEQNAV_OK) {
      return fail(s);
    }
    std::cout << "wrote " << out_path << "/checkpoint.orst\n";
    return 0;
  }

  if (eval->parsed()) {
    WorldsetPtr ws;
    if (int rc = open_worlds(worlds_dir, ws); rc != 0) return rc;
    ModelPtr model;
    if (int rc = open_model(checkpoint_path, model); rc != 0) return rc;
    char* report = nullptr;
    if (seqnav_status s = seqnav_evaluate(model.get(), ws.get(), split.c_str(), mode.c_str(),
                                          out_path.c_str(), &report);
        s != SEQNAV_OK) {
      return fail(s);
    }
    if (report != nullptr) {
      std::cout << report << "\n";
      seqnav_string_free(report);
    }
    return 0;
  }

  if (dump->parsed()) {
    WorldsetPtr ws;
    if (int rc = open_worlds(worlds_dir, ws); rc != 0) return rc;
    ModelPtr model;
    if (int rc = open_model(checkpoint_path, model); rc != 0) return rc;
    if (seqnav_status s = seqnav_dump_attention(model.get(), ws.get(), episode_id.c_str(),
                                                out_path.c_str());
        s != SEQNAV_OK) {
      return fail(s);
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
  }
  return 2;
}
