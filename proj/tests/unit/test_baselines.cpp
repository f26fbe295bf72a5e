#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "relief/baselines.hpp"
#include "relief/error.hpp"
#include "relief/observation.hpp"

using namespace relief;
using namespace fixtures;

namespace {

// Exhaustive maximum of completed tasks over every joint route, with no
// memoization; only for very small instances.
int brute_optimum(const GridWorld& world, const std::vector<AgentState>& agents, int steps_left) {
  if (steps_left == 0 || world.remaining_tasks() == 0) return 0;
  std::vector<std::vector<CellIndex>> masks;
  for (const AgentState& a : agents) masks.push_back(action_mask(world, a));
  std::vector<std::size_t> pick(masks.size(), 0);
  int best = 0;
  while (true) {
    std::vector<CellIndex> joint;
    for (std::size_t i = 0; i < masks.size(); ++i) joint.push_back(masks[i][pick[i]]);
    GridWorld w = world;
    std::vector<AgentState> a = agents;
    const int got = step(w, a, joint).task_cpt;
    best = std::max(best, got + brute_optimum(w, a, steps_left - 1));
    std::size_t k = 0;
    while (k < pick.size() && ++pick[k] == masks[k].size()) pick[k++] = 0;
    if (k == pick.size()) break;
  }
  return best;
}

// Plays an oracle plan and returns the completed count.
int play(Scenario s, const OracleResult& r) {
  s.time_limit = static_cast<int>(r.plan.size());
  Episode ep(std::move(s));
  for (const auto& joint : r.plan) ep.advance(joint);
  return ep.trace().completed();
}

Scenario random_tiny(std::mt19937_64& rng) {
  std::uniform_int_distribution<CellIndex> cell(0, 15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Cell> cells(16);
  for (int k = 0; k < 3; ++k) cells[static_cast<std::size_t>(cell(rng))].task = true;
  Scenario s;
  s.world = GridWorld(4, 4, cells);
  s.agents = {uav(0, cell(rng), 1.0 + u(rng), 0.4 + 0.6 * u(rng), 0.3), worker(1, cell(rng), 1.0 + u(rng)),
              car(2, cell(rng), 1.0 + u(rng))};
  s.time_limit = 3;
  return s;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("greedy moves a UAV onto the only reachable task") {
  const GridWorld w = make_world(5, 5, {}, {7});
  const std::vector<AgentState> agents{uav(0, 12, 1.0), worker(1, 2, 1.0)};
  const GreedyPlan plan = greedy_step(w, agents);
  CHECK(plan.joint[0] == 7);
  CHECK(plan.joint[1] == 7);
}

TEST_CASE("greedy picks the brute-force minimizer of summed distances") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Scenario s = random_scenario(rng);
    const GreedyPlan plan = greedy_step(s.world, s.agents);
    const auto tasks = s.world.task_cells();
    std::vector<CellIndex> uav_cells;
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
      const AgentState& a = s.agents[i];
      const auto mask = action_mask(s.world, a);
      auto cost = [&](CellIndex c) {
        double sum = 0.0;
        if (a.kind == AgentKind::Car) {
          for (CellIndex u : uav_cells) sum += s.world.distance(c, u);
        } else {
          for (CellIndex t : tasks) sum += s.world.distance(c, t);
        }
        return sum;
      };
      CellIndex best = mask[0];
      for (CellIndex c : mask)
        if (cost(c) < cost(best)) best = c;
      CHECK(plan.joint[i] == best);
      if (a.is_uav()) uav_cells.push_back(plan.joint[i]);
    }
  }
}

TEST_CASE("greedy with no remaining tasks picks the lowest reachable cell") {
  const GridWorld w = make_world(4, 4);
  const std::vector<AgentState> agents{uav(0, 5, 1.0), worker(1, 10, 1.0)};
  const GreedyPlan plan = greedy_step(w, agents);
  CHECK(plan.joint[0] == 1);
  CHECK(plan.joint[1] == 6);
}

TEST_CASE("a car heads for the UAV's planned cell") {
  const GridWorld w = make_world(5, 1, {}, {4});
  const std::vector<AgentState> agents{uav(0, 2, 2.0), car(1, 0, 2.0)};
  const GreedyPlan plan = greedy_step(w, agents);
  CHECK(plan.joint[0] == 4);
  CHECK(plan.joint[1] == 2);
}

TEST_CASE("random baseline") {
  std::mt19937_64 rng(3);
  const std::vector<std::vector<CellIndex>> forced{{4}, {9}};
  CHECK(random_step(forced, rng) == std::vector<CellIndex>{4, 9});

  std::mt19937_64 a(7), b(7);
  const std::vector<std::vector<CellIndex>> masks{{0, 1, 2}, {3, 4, 5, 6}};
  for (int i = 0; i < 20; ++i) CHECK(random_step(masks, a) == random_step(masks, b));

  // Chi-square against uniform for each mask, p = 0.001.
  std::vector<std::vector<int>> counts{std::vector<int>(3), std::vector<int>(4)};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto j = random_step(masks, rng);
    ++counts[0][static_cast<std::size_t>(j[0])];
    ++counts[1][static_cast<std::size_t>(j[1] - 3)];
  }
  const double critical[2] = {13.816, 16.266};
  for (std::size_t m = 0; m < 2; ++m) {
    const double expect = static_cast<double>(draws) / counts[m].size();
    double chi2 = 0.0;
    for (int c : counts[m]) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < critical[m]);
  }
}

TEST_CASE("oracle on hand-checkable instances") {
  SUBCASE("2x2 grid, horizon 1") {
    Scenario s;
    s.world = make_world(2, 2, {}, {3});
    s.agents = {uav(0, 0, 2.0), worker(1, 0, 2.0)};
    s.time_limit = 1;
    const OracleResult r = solve_exact(s, 1);
    CHECK(r.optimal == 1);
    REQUIRE(r.plan.size() == 1);
    CHECK(r.plan[0] == std::vector<CellIndex>{3, 3});
    CHECK(play(s, r) == 1);
  }
  SUBCASE("no tasks") {
    Scenario s;
    s.world = make_world(3, 3);
    s.agents = {uav(0, 0, 1.0), worker(1, 8, 1.0)};
    for (int h : {0, 1, 2, 3}) CHECK(solve_exact(s, h).optimal == 0);
  }
  SUBCASE("guards") {
    Scenario s;
    s.world = make_world(3, 3, {}, {4});
    s.agents = {uav(0, 0, 3.0), worker(1, 8, 3.0)};
    CHECK_THROWS_AS(solve_exact(s, 5), Error);
    OracleLimits tight;
    tight.max_joint_actions = 10;
    try {
      solve_exact(s, 2, tight);
      FAIL("expected TooLarge");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooLarge);
    }
  }
}

TEST_CASE("oracle matches unmemoized enumeration and dominates greedy") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Scenario s = random_tiny(rng);
    const OracleResult r = solve_exact(s, 3);
    GridWorld w = s.world;
    const int initial = initial_completion_sweep(w, s.agents).task_cpt;
    CHECK(r.initial_completions == initial);
    CHECK(r.optimal == initial + brute_optimum(w, s.agents, 3));
    CHECK(r.plan.size() == 3);
    CHECK(play(s, r) == r.optimal);
    Scenario g = s;
    g.time_limit = 3;
    CHECK(run_episode(g, GreedyPolicy{}, 0).completed() <= r.optimal);
    CHECK(run_episode(g, RandomPolicy{}, trial).completed() <= r.optimal);
  }
}

TEST_CASE("episodes are deterministic per seed") {
  std::mt19937_64 rng(5);
  const Scenario s = random_scenario(rng);
  CHECK(run_episode(s, RandomPolicy{}, 11) == run_episode(s, RandomPolicy{}, 11));
  CHECK(run_episode(s, GreedyPolicy{}, 1) == run_episode(s, GreedyPolicy{}, 2));
}

}  // TEST_SUITE
