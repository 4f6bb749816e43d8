/*
 * seqnav — graph-world vision-and-language navigation: procedural world
 * generation, an object-level sequential transformer agent, mixed
 * imitation/actor-critic training, and navigation metrics.
 *
 * C API over the C++ core. All functions return a status code; on failure
 * seqnav_last_error() describes the problem for the calling thread. Handles
 * are opaque and freed with their matching *_free function. Strings returned
 * through char** out-parameters are freed with seqnav_string_free().
 */
#ifndef SEQNAV_H
#define SEQNAV_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SEQNAV_API __declspec(dllexport)
#else
#define SEQNAV_API __attribute__((visibility("default")))
#endif

typedef enum seqnav_status {
  SEQNAV_OK = 0,
  SEQNAV_ERR_INVALID_ARG = 1, /* bad config/usage; the message names the field */
  SEQNAV_ERR_IO = 2,          /* missing or unwritable file */
  SEQNAV_ERR_NOT_FOUND = 3,   /* unknown episode, house or split */
  SEQNAV_ERR_NUMERIC = 4,     /* training aborted on non-finite losses */
  SEQNAV_ERR_INTERNAL = 5
} seqnav_status;

/* Houses, episode splits and the vocabulary, as produced by generation or
 * loaded from a world directory. */
typedef struct seqnav_worldset seqnav_worldset;

/* A trained (or freshly initialized) agent loaded from a checkpoint. */
typedef struct seqnav_model seqnav_model;

SEQNAV_API const char* seqnav_version(void);
SEQNAV_API const char* seqnav_status_name(seqnav_status status);

/* Message for the most recent failure on this thread; never NULL. */
SEQNAV_API const char* seqnav_last_error(void);

SEQNAV_API void seqnav_string_free(char* s);

/* Generates houses and episode splits from the run-config JSON (the same
 * document the CLI takes via --config). */
SEQNAV_API seqnav_status seqnav_worldset_generate(const char* run_config_json,
                                                  seqnav_worldset** out);

/* Writes <split>.world.json / <split>.episodes.json files into dir. */
SEQNAV_API seqnav_status seqnav_worldset_save(const seqnav_worldset* ws, const char* dir);

SEQNAV_API seqnav_status seqnav_worldset_open(const char* dir, seqnav_worldset** out);

/* Split/house/vocab counts as a JSON string (caller frees). */
SEQNAV_API seqnav_status seqnav_worldset_info(const seqnav_worldset* ws, char** json_out);

SEQNAV_API void seqnav_worldset_free(seqnav_worldset* ws);

/* Trains on the worldset per the run-config JSON and writes checkpoint.orst,
 * train_log.jsonl and run_config.json into out_dir. resume_checkpoint may be
 * NULL; when given, parameters, optimizer state and epoch numbering continue
 * from it. */
SEQNAV_API seqnav_status seqnav_train(const char* run_config_json, const seqnav_worldset* ws,
                                      const char* out_dir, const char* resume_checkpoint);

SEQNAV_API seqnav_status seqnav_model_open(const char* checkpoint_path, seqnav_model** out);
SEQNAV_API void seqnav_model_free(seqnav_model* m);

/* Greedy single-run evaluation of a split under a task mode (r2r, reverie or
 * ndh). Writes the metrics report to report_path and the executed
 * trajectories to <report stem>.trajectories.jsonl beside it. When
 * report_json_out is non-NULL it receives the report (caller frees). */
SEQNAV_API seqnav_status seqnav_evaluate(const seqnav_model* m, const seqnav_worldset* ws,
                                         const char* split, const char* mode,
                                         const char* report_path, char** report_json_out);

/* Replays one episode greedily and writes nested JSON with per-step,
 * per-layer, per-head attention rows for [CLS] and each instruction token. */
SEQNAV_API seqnav_status seqnav_dump_attention(const seqnav_model* m, const seqnav_worldset* ws,
                                               const char* episode_id, const char* out_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SEQNAV_H */
