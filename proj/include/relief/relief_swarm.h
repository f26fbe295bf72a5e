#ifndef RELIEF_SWARM_H_
#define RELIEF_SWARM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RS_API __declspec(dllexport)
#elif defined(__GNUC__)
#define RS_API __attribute__((visibility("default")))
#else
#define RS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Nonzero values mirror the library's internal error kinds. */
typedef enum rs_status {
  RS_OK = 0,
  RS_INVALID_ARGUMENT = 1,
  RS_IO = 2,
  RS_PARSE = 3,
  RS_PRECONDITION = 4,
  RS_MASKED_ACTION = 5,
  RS_DIMENSION = 6,
  RS_CONFIG = 7,
  RS_TOO_LARGE = 8,
  RS_NUMERIC = 9,
  RS_UNDEFINED_RATE = 10,
  RS_GENERATION = 11,
  RS_SCHEMA_VERSION = 12,
  RS_INTERNAL = 99
} rs_status;

typedef struct rs_scenario rs_scenario;
typedef struct rs_env rs_env;

typedef struct rs_step_outcome {
  int32_t task_cpt;
  double mitig_sum;
  int32_t swap_count;
} rs_step_outcome;

/* Message of the last failure on the calling thread; never NULL. */
RS_API const char* rs_last_error(void);
RS_API const char* rs_version(void);
/* Frees strings returned through char** out-parameters. */
RS_API void rs_string_free(char* s);

RS_API rs_status rs_scenario_load(const char* path, rs_scenario** out);
RS_API rs_status rs_scenario_from_json(const char* json, rs_scenario** out);
RS_API rs_status rs_scenario_generate(const char* recipe_path, uint64_t seed, rs_scenario** out);
RS_API rs_status rs_scenario_save(const rs_scenario* scenario, const char* path);
RS_API rs_status rs_scenario_to_json(const rs_scenario* scenario, char** out);
RS_API void rs_scenario_free(rs_scenario* scenario);

/* An environment runs one episode of a scenario; the initial completion
   sweep happens on creation. */
RS_API rs_status rs_env_create(const rs_scenario* scenario, rs_env** out);
RS_API size_t rs_env_agent_count(const rs_env* env);
RS_API int32_t rs_env_time(const rs_env* env);
RS_API int32_t rs_env_remaining_tasks(const rs_env* env);
/* Copies up to capacity cells of the agent's action mask; *count receives
   the full mask size. */
RS_API rs_status rs_env_mask(const rs_env* env, size_t agent, int32_t* cells, size_t capacity, size_t* count);
RS_API rs_status rs_env_step(rs_env* env, const int32_t* joint_action, size_t agent_count, rs_step_outcome* out);
RS_API rs_status rs_env_observation_json(const rs_env* env, char** out);
RS_API rs_status rs_env_trace_json(const rs_env* env, char** out);
RS_API void rs_env_free(rs_env* env);

/* Workflows. Outputs are written as JSON (or CSV for reports) text. */
RS_API rs_status rs_train(const char* config_path, const char* out_dir);
/* policies: "greedy", "random" or checkpoint paths. Seeds are 0..seed_count-1.
   threads = 0 honours RELIEF_SWARM_THREADS. Besides the JSON report at out_path,
   writes <out_path>.curves.csv and <out_path>.swaps.csv. */
RS_API rs_status rs_eval(const char* const* policies, size_t policy_count, const char* recipe_path,
                         uint32_t seed_count, int32_t time_limit, int32_t threads, const char* out_path);
RS_API rs_status rs_oracle(const rs_scenario* scenario, int32_t horizon, char** out_json);
/* format: "csv" or "json". */
RS_API rs_status rs_report(const char* run_dir, const char* format, char** out);

#ifdef __cplusplus
}
#endif

#endif /* RELIEF_SWARM_H_ */
