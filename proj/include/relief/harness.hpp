#ifndef RELIEF_HARNESS_HPP_
#define RELIEF_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relief/baselines.hpp"
#include "relief/training.hpp"

namespace relief {

// Closed interval; lo == hi is a fixed value and consumes no randomness.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double draw(std::mt19937_64& rng) const;
  bool operator==(const Interval&) const = default;
};

enum class TaskPlacement { Random, Checkin };
enum class StartPlacement { Same, Random, Checkin };

struct ScenarioRecipe {
  std::string name;
  int width = 16;
  int height = 16;
  int obstacles = 0;
  int tasks = 0;
  TaskPlacement task_placement = TaskPlacement::Random;
  StartPlacement start_placement = StartPlacement::Random;
  int uavs = 0;
  int workers = 0;
  int cars = 0;
  Interval uav_radius;
  Interval worker_radius;
  Interval car_radius;
  Interval csp;
  int time_limit = 9;
  std::uint64_t seed = 0;
  // Density grid used by check-in placement; empty selects the synthetic one.
  std::filesystem::path density_file;

  bool uses_density() const noexcept {
    return task_placement == TaskPlacement::Checkin || start_placement == StartPlacement::Checkin;
  }
  void validate() const;
  Json to_json() const;
  // Relative density paths resolve against base_dir.
  static ScenarioRecipe from_json(const Json& doc, const std::filesystem::path& base_dir = {});
};

ScenarioRecipe load_recipe(const std::filesystem::path& path);

/// Nonnegative mass per cell, row-major, summing to 1.
struct DensityGrid {
  int height = 0;
  int width = 0;
  std::vector<double> mass;
};

DensityGrid load_density(const std::filesystem::path& path);
void save_density(const DensityGrid& density, const std::filesystem::path& path);
// A few seeded Gaussian bumps. With a world, obstacle cells are zeroed
// before normalizing.
DensityGrid synth_density(const ScenarioRecipe& recipe, std::uint64_t seed, const GridWorld* world = nullptr);
// Zeroes obstacle cells and renormalizes. Throws Error(Generation) when no
// mass remains.
DensityGrid mask_density(const DensityGrid& density, const GridWorld& world);

// Obstacles, then tasks, then agent starts, then per-agent radii and csp,
// all drawn from one generator seeded by `seed`.
Scenario generate(const ScenarioRecipe& recipe, std::uint64_t seed);
inline Scenario generate(const ScenarioRecipe& recipe) { return generate(recipe, recipe.seed); }

// "greedy", "random", or a checkpoint path.
std::shared_ptr<const Policy> make_policy(const std::string& name);

struct EpisodeRecord {
  std::string policy;
  std::string recipe;
  std::uint64_t seed = 0;
  int initial_tasks = 0;
  int completed = 0;
  double rate = 0.0;
  EpisodeTrace trace;
};

struct PolicySummary {
  std::string policy;
  std::string recipe;
  int episodes = 0;
  double mean_rate = 0.0;
  double stddev_rate = 0.0;  // sample standard deviation, 0 for one episode
  std::vector<double> mean_curve;  // mean completions per moment
  int total_swaps = 0;
};

struct EvalReport {
  int time_limit = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<PolicySummary> summaries;

  Json to_json() const;
  // policy,recipe,seed,moment,completed,cumulative
  std::string curves_csv() const;
  // policy,recipe,seed,uav,moment,power,swap,car,prev_pow
  std::string swap_table_csv() const;
};

struct NamedPolicy {
  std::string label;
  std::shared_ptr<const Policy> policy;
};

// Episode (p, r, s) runs generate(recipe r, seed s) with time_limit under
// policy p. threads = 0 uses RELIEF_SWARM_THREADS or the hardware count.
EvalReport run_eval(std::span<const NamedPolicy> policies, std::span<const ScenarioRecipe> recipes,
                    std::span<const std::uint64_t> seeds, int time_limit, int threads = 0);

int eval_thread_count(int requested);

/// Training run described by a JSON document:
/// {"train": {...}, "recipe": path-or-object | "scenario": path,
///  "time_limit": T?, "scenario_seed_offset": N?}
struct TrainingJob {
  TrainConfig config;
  ScenarioSource source;
  Json description;
};
TrainingJob training_job_from_json(const Json& doc, const std::filesystem::path& base_dir);
FitResult run_training(const std::filesystem::path& config_path, const std::filesystem::path& out_dir);

// Summaries of a run directory's log.jsonl.
std::string training_report_csv(const std::filesystem::path& run_dir);
Json training_report_json(const std::filesystem::path& run_dir);

}  // namespace relief

#endif  // RELIEF_HARNESS_HPP_
