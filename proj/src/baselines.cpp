#include "relief/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "relief/error.hpp"

namespace relief {

namespace {

CellIndex argmin_distance_sum(const GridWorld& world, const std::vector<CellIndex>& mask,
                              std::span<const CellIndex> targets) {
  CellIndex best = mask.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (CellIndex c : mask) {
    double sum = 0.0;
    for (CellIndex t : targets) sum += world.distance(c, t);
    if (sum < best_sum) {
      best_sum = sum;
      best = c;
    }
  }
  return best;
}

}  // namespace

GreedyPlan greedy_step(const GridWorld& world, std::span<const AgentState> agents) {
  const std::vector<CellIndex> tasks = world.task_cells();
  GreedyPlan plan;
  plan.joint.assign(agents.size(), 0);
  std::vector<CellIndex> uav_next;
  for (AgentKind kind : {AgentKind::Uav, AgentKind::Worker, AgentKind::Car}) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const AgentState& a = agents[i];
      if (a.kind != kind) continue;
      const auto mask = action_mask(world, a);
      const std::span<const CellIndex> targets =
          kind == AgentKind::Car ? std::span<const CellIndex>(uav_next) : std::span<const CellIndex>(tasks);
      plan.joint[i] = argmin_distance_sum(world, mask, targets);
      if (kind == AgentKind::Uav) uav_next.push_back(plan.joint[i]);
    }
  }
  return plan;
}

std::vector<CellIndex> random_step(std::span<const std::vector<CellIndex>> masks, std::mt19937_64& rng) {
  std::vector<CellIndex> joint;
  joint.reserve(masks.size());
  for (const auto& mask : masks) {
    if (mask.empty()) throw Error(ErrorCode::InvalidArgument, "random_step: empty mask");
    std::uniform_int_distribution<std::size_t> pick(0, mask.size() - 1);
    joint.push_back(mask[pick(rng)]);
  }
  return joint;
}

std::vector<CellIndex> GreedyPolicy::act(const GridWorld& world, std::span<const AgentState> agents,
                                         std::mt19937_64&) const {
  return greedy_step(world, agents).joint;
}

std::vector<CellIndex> RandomPolicy::act(const GridWorld& world, std::span<const AgentState> agents,
                                         std::mt19937_64& rng) const {
  std::vector<std::vector<CellIndex>> masks;
  masks.reserve(agents.size());
  for (const AgentState& a : agents) masks.push_back(action_mask(world, a));
  return random_step(masks, rng);
}

EpisodeTrace run_episode(const Scenario& scenario, const Policy& policy, std::uint64_t seed) {
  policy.check_compatible(scenario);
  std::mt19937_64 rng(seed);
  Episode episode(scenario);
  while (!episode.done()) episode.advance(policy.act(episode.world(), episode.agents(), rng));
  return episode.trace();
}

namespace {

class ExactSearch {
 public:
  ExactSearch(int horizon, const OracleLimits& limits) : horizon_(horizon), limits_(limits) {}

  // Best number of completions obtainable from moment t onwards.
  int search(const GridWorld& world, const std::vector<AgentState>& agents, int t) {
    if (t >= horizon_) return 0;
    const std::string key = state_key(world, agents, t);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second.value;
    ++nodes_;

    Entry entry;
    entry.best.resize(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) entry.best[i] = agents[i].loc;
    if (world.remaining_tasks() == 0) {
      memo_.emplace(key, entry);
      return 0;
    }

    std::vector<std::vector<CellIndex>> masks;
    double product = 1.0;
    for (const AgentState& a : agents) {
      masks.push_back(action_mask(world, a));
      product *= static_cast<double>(masks.back().size());
    }
    if (product > limits_.max_joint_actions) {
      throw Error(ErrorCode::TooLarge, "oracle: " + std::to_string(static_cast<long long>(product)) +
                                           " joint actions per state exceed the limit");
    }

    // On the final step only UAV and worker destinations affect the count.
    const bool last = t + 1 == horizon_;
    if (last) {
      for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].kind == AgentKind::Car) masks[i] = {agents[i].loc};
      }
    }

    std::vector<std::size_t> digit(agents.size(), 0);
    std::vector<CellIndex> joint(agents.size());
    entry.value = -1;
    while (true) {
      for (std::size_t i = 0; i < agents.size(); ++i) joint[i] = masks[i][digit[i]];
      int value = 0;
      if (last) {
        value = count_completions(world, agents, joint);
      } else {
        GridWorld w = world;
        std::vector<AgentState> a = agents;
        value = step(w, a, joint).task_cpt;
        value += search(w, a, t + 1);
      }
      if (value > entry.value) {
        entry.value = value;
        entry.best = joint;
      }
      bool more = false;
      for (std::size_t k = agents.size(); k-- > 0;) {
        if (++digit[k] < masks[k].size()) {
          more = true;
          break;
        }
        digit[k] = 0;
      }
      if (!more) break;
    }
    memo_.emplace(key, entry);
    return entry.value;
  }

  const std::vector<CellIndex>& best(const GridWorld& world, const std::vector<AgentState>& agents, int t) const {
    return memo_.at(state_key(world, agents, t)).best;
  }

  std::int64_t nodes() const noexcept { return nodes_; }

 private:
  struct Entry {
    int value = 0;
    std::vector<CellIndex> best;
  };

  static int count_completions(const GridWorld& world, const std::vector<AgentState>& agents,
                               const std::vector<CellIndex>& joint) {
    std::vector<CellIndex> done;
    for (std::size_t u = 0; u < agents.size(); ++u) {
      if (agents[u].kind != AgentKind::Uav || !world.cell(joint[u]).task) continue;
      bool met = false;
      for (std::size_t w = 0; w < agents.size() && !met; ++w) {
        met = agents[w].kind == AgentKind::Worker && joint[w] == joint[u];
      }
      if (met && std::find(done.begin(), done.end(), joint[u]) == done.end()) done.push_back(joint[u]);
    }
    return static_cast<int>(done.size());
  }

  static std::string state_key(const GridWorld& world, const std::vector<AgentState>& agents, int t) {
    std::string key;
    auto put = [&key](const auto& v) { key.append(reinterpret_cast<const char*>(&v), sizeof(v)); };
    put(t);
    for (const AgentState& a : agents) {
      put(a.loc);
      if (a.is_uav()) put(static_cast<std::int64_t>(std::llround(a.pow * 1e9)));
    }
    for (const Cell& c : world.cells()) key.push_back(c.task ? '1' : '0');
    return key;
  }

  int horizon_;
  OracleLimits limits_;
  std::int64_t nodes_ = 0;
  std::unordered_map<std::string, Entry> memo_;
};

}  // namespace

OracleResult solve_exact(const Scenario& scenario, int horizon, const OracleLimits& limits) {
  const auto start = std::chrono::steady_clock::now();
  if (horizon < 0) throw Error(ErrorCode::InvalidArgument, "oracle: negative horizon");
  if (horizon > limits.max_horizon) {
    throw Error(ErrorCode::TooLarge, "oracle: horizon " + std::to_string(horizon) + " exceeds the limit of " +
                                         std::to_string(limits.max_horizon));
  }
  GridWorld world = scenario.world;
  std::vector<AgentState> agents = scenario.agents;
  validate_agents(world, agents);

  OracleResult result;
  result.initial_completions = initial_completion_sweep(world, agents).task_cpt;
  ExactSearch search(horizon, limits);
  result.optimal = result.initial_completions + search.search(world, agents, 0);
  result.nodes = search.nodes();

  for (int t = 0; t < horizon; ++t) {
    // Once every task is done the search stops recording states; agents hold.
    std::vector<CellIndex> joint;
    if (world.remaining_tasks() == 0) {
      for (const AgentState& a : agents) joint.push_back(a.loc);
    } else {
      joint = search.best(world, agents, t);
    }
    step(world, agents, joint);
    result.plan.push_back(std::move(joint));
  }
  result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Json oracle_to_json(const OracleResult& result) {
  return {{"schema_version", kSchemaVersion},
          {"optimal", result.optimal},
          {"initial_completions", result.initial_completions},
          {"plan", result.plan},
          {"nodes", result.nodes},
          {"runtime", result.runtime_seconds}};
}

}  // namespace relief
