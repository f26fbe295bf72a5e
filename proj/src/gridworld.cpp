#include "relief/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "relief/error.hpp"

namespace relief {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "io error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Precondition: return "precondition violation";
    case ErrorCode::MaskedAction: return "masked action violation";
    case ErrorCode::Dimension: return "dimension error";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::TooLarge: return "instance too large";
    case ErrorCode::Numeric: return "numeric error";
    case ErrorCode::UndefinedRate: return "undefined rate";
    case ErrorCode::Generation: return "generation error";
    case ErrorCode::SchemaVersion: return "schema version mismatch";
  }
  return "unknown error";
}

const char* agent_kind_name(AgentKind kind) noexcept {
  switch (kind) {
    case AgentKind::Uav: return "uav";
    case AgentKind::Worker: return "worker";
    case AgentKind::Car: return "car";
  }
  return "?";
}

GridWorld::GridWorld(int width, int height, std::vector<Cell> cells)
    : width_(width), height_(height), cells_(std::move(cells)) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }
  if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorCode::Dimension, "cell count does not match width*height");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i].obst && cells_[i].task) {
      throw Error(ErrorCode::InvalidArgument,
                  "cell " + std::to_string(i) + " is both an obstacle and a task");
    }
    if (cells_[i].task) ++initial_task_count_;
  }
  remaining_tasks_ = initial_task_count_;
}

double GridWorld::distance(CellIndex a, CellIndex b) const noexcept {
  const double dr = row(a) - row(b);
  const double dc = col(a) - col(b);
  return std::sqrt(dr * dr + dc * dc);
}

std::vector<CellIndex> GridWorld::task_cells() const {
  std::vector<CellIndex> out;
  out.reserve(static_cast<std::size_t>(remaining_tasks_));
  for (CellIndex c = 0; c < cell_count(); ++c) {
    if (cells_[static_cast<std::size_t>(c)].task) out.push_back(c);
  }
  return out;
}

bool GridWorld::clear_task(CellIndex c) {
  Cell& cell = cells_.at(static_cast<std::size_t>(c));
  if (!cell.task) return false;
  cell.task = false;
  --remaining_tasks_;
  return true;
}

int Scenario::count(AgentKind kind) const noexcept {
  return static_cast<int>(std::count_if(agents.begin(), agents.end(),
                                        [kind](const AgentState& a) { return a.kind == kind; }));
}

int EpisodeTrace::completed() const noexcept {
  int total = 0;
  for (int c : per_step_cpt) total += c;
  return total;
}

std::vector<CellIndex> reachable_set(const GridWorld& world, CellIndex loc, double radius) {
  if (!world.in_bounds(loc)) {
    throw Error(ErrorCode::Precondition, "location " + std::to_string(loc) + " is out of bounds");
  }
  if (world.cell(loc).obst) {
    throw Error(ErrorCode::Precondition, "location " + std::to_string(loc) + " is an obstacle");
  }
  const int r0 = world.row(loc);
  const int c0 = world.col(loc);
  const double limit = radius * radius + kPowerEpsilon;
  const int span = static_cast<int>(std::floor(std::max(radius, 0.0) + kPowerEpsilon));
  std::vector<CellIndex> out;
  for (int r = std::max(0, r0 - span); r <= std::min(world.height() - 1, r0 + span); ++r) {
    for (int c = std::max(0, c0 - span); c <= std::min(world.width() - 1, c0 + span); ++c) {
      const double dr = r - r0;
      const double dc = c - c0;
      if (dr * dr + dc * dc > limit) continue;
      const CellIndex idx = world.index(r, c);
      if (!world.cell(idx).obst) out.push_back(idx);
    }
  }
  return out;
}

std::vector<CellIndex> action_mask(const GridWorld& world, const AgentState& agent) {
  if (agent.stopped()) {
    if (!world.in_bounds(agent.loc) || world.cell(agent.loc).obst) {
      throw Error(ErrorCode::Precondition, "agent " + std::to_string(agent.id) + " is off-grid");
    }
    return {agent.loc};
  }
  return reachable_set(world, agent.loc, agent.radius);
}

void validate_agents(const GridWorld& world, std::span<const AgentState> agents) {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const AgentState& a = agents[i];
    const std::string who = "agent " + std::to_string(i);
    if (a.id != static_cast<int>(i)) throw Error(ErrorCode::Precondition, who + " has id " + std::to_string(a.id));
    if (!world.in_bounds(a.loc)) throw Error(ErrorCode::Precondition, who + " is out of bounds");
    if (world.cell(a.loc).obst) throw Error(ErrorCode::Precondition, who + " sits on an obstacle");
    if (!(a.radius >= 0.0) || !std::isfinite(a.radius)) {
      throw Error(ErrorCode::Precondition, who + " has an invalid radius");
    }
    if (a.is_uav()) {
      if (!(a.csp > 0.0) || a.csp > 1.0) throw Error(ErrorCode::Precondition, who + " needs csp in (0,1]");
      if (!(a.pow >= 0.0 && a.pow <= 1.0)) throw Error(ErrorCode::Precondition, who + " needs pow in [0,1]");
    }
  }
  // Kinds must be grouped UAVs, workers, cars.
  for (std::size_t i = 1; i < agents.size(); ++i) {
    if (static_cast<int>(agents[i].kind) < static_cast<int>(agents[i - 1].kind)) {
      throw Error(ErrorCode::Precondition, "agents must be ordered uavs, workers, cars");
    }
  }
}

double mitigation_reward(double prev_pow, double csp) {
  const double full = std::exp(-std::floor(1.0 / csp + kPowerEpsilon));
  if (prev_pow < csp - kPowerEpsilon) return 1.0 - full;
  return std::exp(-std::floor((prev_pow - csp) / csp + kPowerEpsilon)) - full;
}

namespace {

// Completion stage shared by step() and the initial sweep.
void complete_tasks(GridWorld& world, std::span<const AgentState> agents, StepOutcome& out) {
  std::vector<char> has_uav(static_cast<std::size_t>(world.cell_count()), 0);
  std::vector<char> has_worker(static_cast<std::size_t>(world.cell_count()), 0);
  for (const AgentState& a : agents) {
    if (a.kind == AgentKind::Uav) has_uav[static_cast<std::size_t>(a.loc)] = 1;
    if (a.kind == AgentKind::Worker) has_worker[static_cast<std::size_t>(a.loc)] = 1;
  }
  for (CellIndex c = 0; c < world.cell_count(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    if (has_uav[i] && has_worker[i] && world.clear_task(c)) out.completed_cells.push_back(c);
  }
  out.task_cpt = static_cast<int>(out.completed_cells.size());
}

}  // namespace

StepOutcome step(GridWorld& world, std::vector<AgentState>& agents,
                 std::span<const CellIndex> joint_action) {
  if (joint_action.size() != agents.size()) {
    throw Error(ErrorCode::Dimension, "joint action has " + std::to_string(joint_action.size()) +
                                                " entries for " + std::to_string(agents.size()) + " agents");
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto mask = action_mask(world, agents[i]);
    if (!std::binary_search(mask.begin(), mask.end(), joint_action[i])) {
      std::ostringstream msg;
      msg << "agent " << i << " (" << agent_kind_name(agents[i].kind) << ") chose cell "
          << joint_action[i] << " outside its action mask";
      throw Error(ErrorCode::MaskedAction, msg.str());
    }
  }

  for (std::size_t i = 0; i < agents.size(); ++i) agents[i].loc = joint_action[i];

  StepOutcome out;
  complete_tasks(world, agents, out);

  for (AgentState& uav : agents) {
    if (!uav.is_uav()) continue;
    const AgentState* car = nullptr;
    for (const AgentState& a : agents) {
      if (a.kind == AgentKind::Car && a.loc == uav.loc) {
        car = &a;
        break;
      }
    }
    const double prev = uav.pow;
    if (car != nullptr) {
      out.mitig_sum += mitigation_reward(prev, uav.csp);
      out.swaps.push_back(Swap{uav.id, car->id, prev});
      uav.pow = 1.0;
    } else if (prev >= uav.csp - kPowerEpsilon) {
      uav.pow = std::max(0.0, prev - uav.csp);
    }
  }
  return out;
}

StepOutcome initial_completion_sweep(GridWorld& world, std::span<const AgentState> agents) {
  StepOutcome out;
  complete_tasks(world, agents, out);
  return out;
}

double completion_rate(const EpisodeTrace& trace, const GridWorld& world) {
  const int initial = trace.initial_task_count > 0 ? trace.initial_task_count : world.initial_task_count();
  if (initial == 0) throw Error(ErrorCode::UndefinedRate, "completion rate is undefined without tasks");
  return static_cast<double>(initial - world.remaining_tasks()) / static_cast<double>(initial);
}

Episode::Episode(Scenario scenario)
    : world_(std::move(scenario.world)), agents_(std::move(scenario.agents)), time_limit_(scenario.time_limit) {
  if (time_limit_ < 0) throw Error(ErrorCode::InvalidArgument, "time limit must be nonnegative");
  validate_agents(world_, agents_);
  initial_ = initial_completion_sweep(world_, agents_);

  trace_.horizon = time_limit_;
  trace_.initial_task_count = world_.initial_task_count();
  for (const AgentState& a : agents_) {
    trace_.kinds.push_back(a.kind);
    trace_.routes.push_back({a.loc});
    if (a.is_uav()) trace_.uav_power.push_back({a.pow});
  }
  trace_.per_step_cpt.push_back(initial_.task_cpt);
  trace_.per_step_swaps.emplace_back();
}

StepOutcome Episode::advance(std::span<const CellIndex> joint_action) {
  if (done()) throw Error(ErrorCode::Precondition, "episode already reached its time limit");
  StepOutcome out = step(world_, agents_, joint_action);
  ++t_;
  std::size_t u = 0;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    trace_.routes[i].push_back(agents_[i].loc);
    if (agents_[i].is_uav()) trace_.uav_power[u++].push_back(agents_[i].pow);
  }
  trace_.per_step_cpt.push_back(out.task_cpt);
  trace_.per_step_swaps.push_back(out.swaps);
  return out;
}

std::vector<CellIndex> joint_action_at(const EpisodeTrace& trace, int t) {
  std::vector<CellIndex> joint;
  joint.reserve(trace.routes.size());
  for (const auto& route : trace.routes) {
    if (t + 1 >= static_cast<int>(route.size())) {
      throw Error(ErrorCode::InvalidArgument, "trace route is shorter than its horizon");
    }
    joint.push_back(route[static_cast<std::size_t>(t) + 1]);
  }
  return joint;
}

EpisodeTrace replay(const Scenario& scenario, const EpisodeTrace& trace) {
  if (trace.routes.size() != scenario.agents.size()) {
    throw Error(ErrorCode::InvalidArgument, "trace and scenario disagree on agent count");
  }
  for (std::size_t i = 0; i < trace.routes.size(); ++i) {
    if (trace.routes[i].empty() || trace.routes[i][0] != scenario.agents[i].loc) {
      throw Error(ErrorCode::InvalidArgument, "trace route " + std::to_string(i) + " starts elsewhere");
    }
  }
  Scenario copy = scenario;
  copy.time_limit = trace.horizon;
  Episode episode(std::move(copy));
  for (int t = 0; t < trace.horizon; ++t) episode.advance(joint_action_at(trace, t));
  return episode.trace();
}

}  // namespace relief
