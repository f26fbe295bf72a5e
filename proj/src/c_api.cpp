#include "relief/relief_swarm.h"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "relief/baselines.hpp"
#include "relief/error.hpp"
#include "relief/harness.hpp"
#include "relief/observation.hpp"

struct rs_scenario {
  relief::Scenario value;
};

struct rs_env {
  std::unique_ptr<relief::Episode> episode;
};

namespace {

thread_local std::string g_last_error;

rs_status fail(rs_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class F>
rs_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return RS_OK;
  } catch (const relief::Error& e) {
    return fail(static_cast<rs_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::exception& e) {
    return fail(RS_INTERNAL, e.what());
  } catch (...) {
    return fail(RS_INTERNAL, "unknown failure");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw relief::Error(relief::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* rs_last_error(void) { return g_last_error.c_str(); }

const char* rs_version(void) { return "0.1.0"; }

void rs_string_free(char* s) { std::free(s); }

rs_status rs_scenario_load(const char* path, rs_scenario** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rs_scenario{relief::load_scenario(path)};
  });
}

rs_status rs_scenario_from_json(const char* json, rs_scenario** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new rs_scenario{relief::scenario_from_json(relief::parse_json(json, "scenario"))};
  });
}

rs_status rs_scenario_generate(const char* recipe_path, uint64_t seed, rs_scenario** out) {
  return guarded([&] {
    require(recipe_path, "recipe_path");
    require(out, "out");
    *out = new rs_scenario{relief::generate(relief::load_recipe(recipe_path), seed)};
  });
}

rs_status rs_scenario_save(const rs_scenario* scenario, const char* path) {
  return guarded([&] {
    require(scenario, "scenario");
    require(path, "path");
    relief::save_scenario(scenario->value, path);
  });
}

rs_status rs_scenario_to_json(const rs_scenario* scenario, char** out) {
  return guarded([&] {
    require(scenario, "scenario");
    require(out, "out");
    *out = copy_string(relief::scenario_to_json(scenario->value).dump(2));
  });
}

void rs_scenario_free(rs_scenario* scenario) { delete scenario; }

rs_status rs_env_create(const rs_scenario* scenario, rs_env** out) {
  return guarded([&] {
    require(scenario, "scenario");
    require(out, "out");
    *out = new rs_env{std::make_unique<relief::Episode>(scenario->value)};
  });
}

size_t rs_env_agent_count(const rs_env* env) { return env ? env->episode->agents().size() : 0; }

int32_t rs_env_time(const rs_env* env) { return env ? env->episode->time() : -1; }

int32_t rs_env_remaining_tasks(const rs_env* env) { return env ? env->episode->world().remaining_tasks() : -1; }

rs_status rs_env_mask(const rs_env* env, size_t agent, int32_t* cells, size_t capacity, size_t* count) {
  return guarded([&] {
    require(env, "env");
    require(count, "count");
    const auto& agents = env->episode->agents();
    if (agent >= agents.size()) throw relief::Error(relief::ErrorCode::InvalidArgument, "agent index out of range");
    const auto mask = relief::action_mask(env->episode->world(), agents[agent]);
    *count = mask.size();
    if (capacity > 0) require(cells, "cells");
    for (size_t i = 0; i < mask.size() && i < capacity; ++i) cells[i] = mask[i];
  });
}

rs_status rs_env_step(rs_env* env, const int32_t* joint_action, size_t agent_count, rs_step_outcome* out) {
  return guarded([&] {
    require(env, "env");
    if (agent_count > 0) require(joint_action, "joint_action");
    const std::vector<relief::CellIndex> joint(joint_action, joint_action + agent_count);
    const relief::StepOutcome o = env->episode->advance(joint);
    if (out != nullptr) {
      out->task_cpt = o.task_cpt;
      out->mitig_sum = o.mitig_sum;
      out->swap_count = static_cast<int32_t>(o.swaps.size());
    }
  });
}

rs_status rs_env_observation_json(const rs_env* env, char** out) {
  return guarded([&] {
    require(env, "env");
    require(out, "out");
    const auto bundle = relief::build_bundle(env->episode->world(), env->episode->agents());
    *out = copy_string(relief::bundle_to_json(bundle).dump());
  });
}

rs_status rs_env_trace_json(const rs_env* env, char** out) {
  return guarded([&] {
    require(env, "env");
    require(out, "out");
    *out = copy_string(relief::trace_to_json(env->episode->trace()).dump());
  });
}

void rs_env_free(rs_env* env) { delete env; }

rs_status rs_train(const char* config_path, const char* out_dir) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out_dir, "out_dir");
    relief::run_training(config_path, out_dir);
  });
}

rs_status rs_eval(const char* const* policies, size_t policy_count, const char* recipe_path, uint32_t seed_count,
                  int32_t time_limit, int32_t threads, const char* out_path) {
  return guarded([&] {
    require(recipe_path, "recipe_path");
    require(out_path, "out_path");
    if (policy_count == 0) throw relief::Error(relief::ErrorCode::InvalidArgument, "at least one policy is required");
    require(policies, "policies");
    std::vector<relief::NamedPolicy> named;
    for (size_t i = 0; i < policy_count; ++i) {
      require(policies[i], "policy");
      auto p = relief::make_policy(policies[i]);
      named.push_back({p->name(), p});
    }
    const relief::ScenarioRecipe recipe = relief::load_recipe(recipe_path);
    std::vector<std::uint64_t> seeds(seed_count);
    for (uint32_t s = 0; s < seed_count; ++s) seeds[s] = s;
    const relief::EvalReport report = relief::run_eval(named, std::span(&recipe, 1), seeds, time_limit, threads);
    const std::string base(out_path);
    relief::write_text_file(base, report.to_json().dump(2) + "\n");
    relief::write_text_file(base + ".curves.csv", report.curves_csv());
    relief::write_text_file(base + ".swaps.csv", report.swap_table_csv());
  });
}

rs_status rs_oracle(const rs_scenario* scenario, int32_t horizon, char** out_json) {
  return guarded([&] {
    require(scenario, "scenario");
    require(out_json, "out_json");
    *out_json = copy_string(relief::oracle_to_json(relief::solve_exact(scenario->value, horizon)).dump(2));
  });
}

rs_status rs_report(const char* run_dir, const char* format, char** out) {
  return guarded([&] {
    require(run_dir, "run_dir");
    require(format, "format");
    require(out, "out");
    const std::string f(format);
    if (f == "csv") {
      *out = copy_string(relief::training_report_csv(run_dir));
    } else if (f == "json") {
      *out = copy_string(relief::training_report_json(run_dir).dump(2));
    } else {
      throw relief::Error(relief::ErrorCode::InvalidArgument, "report format must be csv or json");
    }
  });
}

}  // extern "C"
