#ifndef RELIEF_GRIDWORLD_HPP_
#define RELIEF_GRIDWORLD_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace relief {

using CellIndex = std::int32_t;

// Tolerance used for power comparisons and the floor() in urgency terms, so
// that 1 - 3*0.3 style accumulations do not cost a UAV its last move.
inline constexpr double kPowerEpsilon = 1e-9;

enum class AgentKind { Uav, Worker, Car };

const char* agent_kind_name(AgentKind kind) noexcept;

struct Cell {
  bool obst = false;
  bool task = false;

  bool operator==(const Cell&) const = default;
};

/// Row-major lattice of cells. Cell index = row * width + col.
class GridWorld {
 public:
  GridWorld() = default;
  GridWorld(int width, int height, std::vector<Cell> cells);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int cell_count() const noexcept { return width_ * height_; }

  bool in_bounds(CellIndex c) const noexcept { return c >= 0 && c < cell_count(); }
  const Cell& cell(CellIndex c) const { return cells_.at(static_cast<std::size_t>(c)); }
  std::span<const Cell> cells() const noexcept { return cells_; }

  int row(CellIndex c) const noexcept { return c / width_; }
  int col(CellIndex c) const noexcept { return c % width_; }
  CellIndex index(int row, int col) const noexcept { return row * width_ + col; }

  // Center-to-center Euclidean distance in cell units.
  double distance(CellIndex a, CellIndex b) const noexcept;

  int initial_task_count() const noexcept { return initial_task_count_; }
  int remaining_tasks() const noexcept { return remaining_tasks_; }
  std::vector<CellIndex> task_cells() const;

  // Clears a task flag. Returns false when the cell held no task.
  bool clear_task(CellIndex c);

  bool operator==(const GridWorld&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
  int initial_task_count_ = 0;
  int remaining_tasks_ = 0;
};

struct AgentState {
  AgentKind kind = AgentKind::Worker;
  int id = 0;
  CellIndex loc = 0;
  double radius = 0.0;
  // UAV only; workers and cars keep pow = 1, csp = 0 and are never drained.
  double pow = 1.0;
  double csp = 0.0;

  bool is_uav() const noexcept { return kind == AgentKind::Uav; }
  bool stopped() const noexcept { return is_uav() && pow < csp - kPowerEpsilon; }

  bool operator==(const AgentState&) const = default;
};

struct Swap {
  int uav_id = 0;
  int car_id = 0;
  double prev_pow = 0.0;

  bool operator==(const Swap&) const = default;
};

struct StepOutcome {
  std::vector<CellIndex> completed_cells;
  int task_cpt = 0;
  double mitig_sum = 0.0;
  std::vector<Swap> swaps;
};

// Everything needed to start an episode. Agents are numbered UAVs first,
// then workers, then cars; AgentState::id equals the position in `agents`.
struct Scenario {
  GridWorld world;
  std::vector<AgentState> agents;
  int time_limit = 0;

  int count(AgentKind kind) const noexcept;
};

/// Per-episode record. Index t of every per-step sequence refers to moment t,
/// so index 0 holds the completions of the initial sweep and never a swap.
struct EpisodeTrace {
  int horizon = 0;
  std::vector<AgentKind> kinds;
  std::vector<std::vector<CellIndex>> routes;
  std::vector<int> per_step_cpt;
  std::vector<std::vector<Swap>> per_step_swaps;
  std::vector<std::vector<double>> uav_power;  // [uav][moment]
  int initial_task_count = 0;

  int completed() const noexcept;
  bool operator==(const EpisodeTrace&) const = default;
};

std::vector<CellIndex> reachable_set(const GridWorld& world, CellIndex loc, double radius);

std::vector<CellIndex> action_mask(const GridWorld& world, const AgentState& agent);

// Checks ids, locations and per-kind attributes of an agent list against a
// world. Throws Error(Precondition) on the first violation.
void validate_agents(const GridWorld& world, std::span<const AgentState> agents);

// Simultaneous move, task completion, urgency-mitigation accounting and
// battery update, in that order. `joint_action[i]` is agent i's destination.
StepOutcome step(GridWorld& world, std::vector<AgentState>& agents,
                 std::span<const CellIndex> joint_action);

StepOutcome initial_completion_sweep(GridWorld& world, std::span<const AgentState> agents);

// Urgency relief credited to a UAV that met a car, given its pre-move power.
double mitigation_reward(double prev_pow, double csp);

double completion_rate(const EpisodeTrace& trace, const GridWorld& world);

/// Runs an episode step by step and records the trace as it goes.
class Episode {
 public:
  explicit Episode(Scenario scenario);

  const GridWorld& world() const noexcept { return world_; }
  const std::vector<AgentState>& agents() const noexcept { return agents_; }
  const EpisodeTrace& trace() const noexcept { return trace_; }
  const StepOutcome& initial_outcome() const noexcept { return initial_; }
  int time() const noexcept { return t_; }
  int time_limit() const noexcept { return time_limit_; }
  bool done() const noexcept { return t_ >= time_limit_; }

  StepOutcome advance(std::span<const CellIndex> joint_action);

 private:
  GridWorld world_;
  std::vector<AgentState> agents_;
  int time_limit_ = 0;
  int t_ = 0;
  StepOutcome initial_;
  EpisodeTrace trace_;
};

// Re-simulates the routes of a trace from the scenario. Throws when the
// routes are infeasible; returns the regenerated trace for comparison.
EpisodeTrace replay(const Scenario& scenario, const EpisodeTrace& trace);

// Builds the joint action for step t (moment t -> t+1) from a trace.
std::vector<CellIndex> joint_action_at(const EpisodeTrace& trace, int t);

}  // namespace relief

#endif  // RELIEF_GRIDWORLD_HPP_
