#include "seqnav/seqnav.h"

#include <cstring>
#include <string>

#include "api/config.hpp"
#include "api/runner.hpp"
#include "core/errors.hpp"
#include "world/world.hpp"

using namespace seqnav;

struct seqnav_worldset {
  WorldSet ws;
};

struct seqnav_model {
  LoadedModel lm;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Runs fn, translating exceptions into status codes and the thread-local
// error message.
template <typename Fn>
seqnav_status guarded(Fn&& fn) {
  try {
    fn();
    return SEQNAV_OK;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return SEQNAV_ERR_INVALID_ARG;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return SEQNAV_ERR_IO;
  } catch (const NotFoundError& e) {
    g_last_error = e.what();
    return SEQNAV_ERR_NOT_FOUND;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return SEQNAV_ERR_NUMERIC;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return SEQNAV_ERR_INVALID_ARG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SEQNAV_ERR_INTERNAL;
  }
}

seqnav_status require(bool ok, const char* what) {
  if (!ok) {
    g_last_error = std::string("null argument: ") + what;
    return SEQNAV_ERR_INVALID_ARG;
  }
  return SEQNAV_OK;
}

}  // namespace

extern "C" {

const char* seqnav_version(void) { return "1.0.0"; }

const char* seqnav_status_name(seqnav_status status) {
  switch (status) {
    case SEQNAV_OK: return "ok";
    case SEQNAV_ERR_INVALID_ARG: return "invalid_argument";
    case SEQNAV_ERR_IO: return "io_error";
    case SEQNAV_ERR_NOT_FOUND: return "not_found";
    case SEQNAV_ERR_NUMERIC: return "numeric_error";
    case SEQNAV_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* seqnav_last_error(void) { return g_last_error.c_str(); }

void seqnav_string_free(char* s) { std::free(s); }

seqnav_status seqnav_worldset_generate(const char* run_config_json, seqnav_worldset** out) {
  if (auto s = require(run_config_json && out, "run_config_json/out")) return s;
  return guarded([&] {
    const RunConfig cfg = parse_run_config(run_config_json);
    auto* handle = new seqnav_worldset{runner_generate_worlds(cfg)};
    *out = handle;
  });
}

seqnav_status seqnav_worldset_save(const seqnav_worldset* ws, const char* dir) {
  if (auto s = require(ws && dir, "worldset/dir")) return s;
  return guarded([&] { ws->ws.save(dir); });
}

seqnav_status seqnav_worldset_open(const char* dir, seqnav_worldset** out) {
  if (auto s = require(dir && out, "dir/out")) return s;
  return guarded([&] {
    auto* handle = new seqnav_worldset{WorldSet::load(dir)};
    *out = handle;
  });
}

seqnav_status seqnav_worldset_info(const seqnav_worldset* ws, char** json_out) {
  if (auto s = require(ws && json_out, "worldset/json_out")) return s;
  return guarded([&] { *json_out = dup_string(runner_worldset_info(ws->ws)); });
}

void seqnav_worldset_free(seqnav_worldset* ws) { delete ws; }

seqnav_status seqnav_train(const char* run_config_json, const seqnav_worldset* ws,
                           const char* out_dir, const char* resume_checkpoint) {
  if (auto s = require(run_config_json && ws && out_dir, "config/worldset/out_dir")) return s;
  return guarded([&] {
    const RunConfig cfg = parse_run_config(run_config_json);
    runner_train(cfg, ws->ws, out_dir, resume_checkpoint ? resume_checkpoint : "");
  });
}

seqnav_status seqnav_model_open(const char* checkpoint_path, seqnav_model** out) {
  if (auto s = require(checkpoint_path && out, "checkpoint_path/out")) return s;
  return guarded([&] {
    auto* handle = new seqnav_model{runner_open_model(checkpoint_path)};
    *out = handle;
  });
}

void seqnav_model_free(seqnav_model* m) { delete m; }

seqnav_status seqnav_evaluate(const seqnav_model* m, const seqnav_worldset* ws,
                              const char* split, const char* mode, const char* report_path,
                              char** report_json_out) {
  if (auto s = require(m && ws && split && mode, "model/worldset/split/mode")) return s;
  return guarded([&] {
    const std::string report =
        runner_evaluate(m->lm, ws->ws, split, mode, report_path ? report_path : "");
    if (report_json_out != nullptr) *report_json_out = dup_string(report);
  });
}

seqnav_status seqnav_dump_attention(const seqnav_model* m, const seqnav_worldset* ws,
                                    const char* episode_id, const char* out_path) {
  if (auto s = require(m && ws && episode_id && out_path, "model/worldset/episode/out_path")) {
    return s;
  }
  return guarded([&] { runner_dump_attention(m->lm, ws->ws, episode_id, out_path); });
}

}  // extern "C"
