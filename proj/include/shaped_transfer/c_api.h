#ifndef SHAPED_TRANSFER_C_API_H
#define SHAPED_TRANSFER_C_API_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SHAPED_TRANSFER_BUILDING)
#    define ST_API __declspec(dllexport)
#  else
#    define ST_API __declspec(dllimport)
#  endif
#else
#  define ST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum st_status {
  ST_OK = 0,
  ST_ERR_INPUT_SHAPE = 1,
  ST_ERR_INVALID_ACTION = 2,
  ST_ERR_INVALID_RESTRICTION = 3,
  ST_ERR_TRAINING_DIVERGENCE = 4,
  ST_ERR_CONTRACT = 5,
  ST_ERR_CONFIGURATION = 6,
  ST_ERR_IO = 7,
  ST_ERR_EMPTY_TRAJECTORY = 8,
  ST_ERR_INTERNAL = 9
} st_status;

/* Message of the last failed call on this thread; empty after a success. */
ST_API const char* st_last_error(void);
ST_API const char* st_status_string(st_status status);
/* Releases strings returned through `char**` out-parameters. */
ST_API void st_free_string(char* s);

typedef struct st_env st_env;
typedef struct st_agent st_agent;
typedef struct st_source_set st_source_set;
typedef struct st_shaping st_shaping;

/* Environments. `restriction_json` may be NULL: {"keep":[...]} or
   {"low":[...],"high":[...]}. */
ST_API st_status st_env_create(const char* id, const char* restriction_json, st_env** out);
ST_API void st_env_destroy(st_env* env);
ST_API int st_env_observation_dim(const st_env* env);
ST_API st_status st_env_action_space(const st_env* env, char** json_out);
ST_API st_status st_env_reset(st_env* env, uint64_t seed, double* observation, size_t capacity);
/* Discrete envs take `action_len == 1` with the retained index in action[0]. */
ST_API st_status st_env_step(st_env* env, const double* action, size_t action_len, double* observation,
                             size_t capacity, double* reward, int* terminal, int* truncated);

/* Trained agents (checkpoints). */
ST_API st_status st_agent_load(const char* path, st_agent** out);
ST_API st_status st_agent_save(const st_agent* agent, const char* path);
ST_API st_status st_agent_info(const st_agent* agent, char** json_out);
/* Writes the greedy (discrete, as one double) or deterministic action. */
ST_API st_status st_agent_act(const st_agent* agent, const double* observation, size_t observation_len,
                              double* action, size_t capacity, size_t* action_len);
ST_API void st_agent_destroy(st_agent* agent);

/* Source sets. */
ST_API st_status st_source_set_collect(const st_agent* source, const char* env_id, int episodes, uint64_t seed,
                                       const char* checkpoint_id, st_source_set** out);
ST_API st_status st_source_set_load(const char* path, st_source_set** out);
ST_API st_status st_source_set_save(const st_source_set* set, const char* path);
ST_API size_t st_source_set_size(const st_source_set* set);
ST_API void st_source_set_destroy(st_source_set* set);

/* Similarity-weighted potential and shaping bonus. */
ST_API st_status st_shaping_create(const st_agent* source, const st_source_set* set, double gamma, st_shaping** out);
ST_API st_status st_shaping_potential(const st_shaping* shaping, const double* observation, size_t observation_len,
                                      const double* action, size_t action_len, double* out);
/* `phi_next` may be NULL when the successor is absorbing. */
ST_API st_status st_shaping_bonus(const st_shaping* shaping, double phi, const double* phi_next, int terminal,
                                  double* out);
ST_API void st_shaping_destroy(st_shaping* shaping);

/* Experiment entry points. `config_json` uses the experiment config schema. */
ST_API st_status st_train_source(const char* config_json, const char* checkpoint_path, const char* csv_path);
ST_API st_status st_run_experiment(const char* config_json, const char* csv_path);
/* align: 0 = episode index, 1 = mean environment steps. */
ST_API st_status st_plot(const char* const* csv_paths, size_t count, const char* svg_path, int align,
                         const char* title);
ST_API st_status st_report(const char* const* csv_paths, size_t count, int final_episodes, char** json_out);

#ifdef __cplusplus
}
#endif

#endif
