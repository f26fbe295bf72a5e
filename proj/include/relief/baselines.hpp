#ifndef RELIEF_BASELINES_HPP_
#define RELIEF_BASELINES_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relief/gridworld.hpp"
#include "relief/io.hpp"

namespace relief {

// One joint action, planned UAVs first, then workers, then cars.
struct GreedyPlan {
  std::vector<CellIndex> joint;
};

// Each UAV and worker minimizes the summed distance to the remaining tasks;
// each car minimizes the summed distance to the UAVs' planned cells. Ties go
// to the lowest cell index.
GreedyPlan greedy_step(const GridWorld& world, std::span<const AgentState> agents);

std::vector<CellIndex> random_step(std::span<const std::vector<CellIndex>> masks, std::mt19937_64& rng);

/// A decision rule that maps the current state to a joint action.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::vector<CellIndex> act(const GridWorld& world, std::span<const AgentState> agents,
                                     std::mt19937_64& rng) const = 0;
  // Throws Error(Config) when the policy cannot drive this scenario.
  virtual void check_compatible(const Scenario&) const {}
};

class GreedyPolicy final : public Policy {
 public:
  std::string name() const override { return "greedy"; }
  std::vector<CellIndex> act(const GridWorld& world, std::span<const AgentState> agents,
                             std::mt19937_64& rng) const override;
};

class RandomPolicy final : public Policy {
 public:
  std::string name() const override { return "random"; }
  std::vector<CellIndex> act(const GridWorld& world, std::span<const AgentState> agents,
                             std::mt19937_64& rng) const override;
};

// Plays a full episode. `seed` drives any randomness inside the policy.
EpisodeTrace run_episode(const Scenario& scenario, const Policy& policy, std::uint64_t seed);

struct OracleLimits {
  int max_horizon = 4;
  double max_joint_actions = 1e6;  // per state
};

struct OracleResult {
  int optimal = 0;  // completions over the whole episode, initial sweep included
  int initial_completions = 0;
  std::vector<std::vector<CellIndex>> plan;  // plan[t] is the joint action at step t
  std::int64_t nodes = 0;
  double runtime_seconds = 0.0;
};

// Exhaustive search over joint-action sequences with memoization on
// (locations, powers, task flags, t). Throws Error(TooLarge) past the limits.
OracleResult solve_exact(const Scenario& scenario, int horizon, const OracleLimits& limits = {});

Json oracle_to_json(const OracleResult& result);

}  // namespace relief

#endif  // RELIEF_BASELINES_HPP_
