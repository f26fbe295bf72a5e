#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "relief/error.hpp"
#include "relief/io.hpp"

using namespace relief;
using namespace fixtures;

TEST_SUITE("gridworld") {

TEST_CASE("world construction checks sizes and exclusive flags") {
  CHECK_THROWS_AS(GridWorld(2, 2, std::vector<Cell>(3)), Error);
  std::vector<Cell> cells(4);
  cells[1] = Cell{true, true};
  CHECK_THROWS_AS(GridWorld(2, 2, cells), Error);
  const GridWorld w = make_world(3, 2, {1}, {0, 4});
  CHECK(w.cell_count() == 6);
  CHECK(w.initial_task_count() == 2);
  CHECK(w.remaining_tasks() == 2);
  CHECK(w.task_cells() == std::vector<CellIndex>{0, 4});
}

TEST_CASE("reachable set on an open 5x5 grid at radius 1 is the plus shape") {
  const GridWorld w = make_world(5, 5);
  const CellIndex center = 12;
  const auto got = reachable_set(w, center, 1.0);
  CHECK(got.size() == 5);
  CHECK(got == brute_reachable(w, center, 1.0));
  CHECK(got == std::vector<CellIndex>{7, 11, 12, 13, 17});
}

TEST_CASE("radius zero reaches only the current cell") {
  const GridWorld w = make_world(4, 3, {5});
  for (CellIndex c : {0, 3, 6, 11}) CHECK(reachable_set(w, c, 0.0) == std::vector<CellIndex>{c});
}

TEST_CASE("obstacles are excluded from the reachable set") {
  const GridWorld w = make_world(5, 5, {13});
  const auto got = reachable_set(w, 12, 1.0);
  CHECK(got.size() == 4);
  CHECK(std::find(got.begin(), got.end(), 13) == got.end());
  CHECK(got == brute_reachable(w, 12, 1.0));
}

TEST_CASE("reachable set agrees with brute force on random grids") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Scenario s = random_scenario(rng);
    for (const AgentState& a : s.agents) CHECK(reachable_set(s.world, a.loc, a.radius) == brute_reachable(s.world, a.loc, a.radius));
  }
}

TEST_CASE("reachable set rejects invalid locations") {
  const GridWorld w = make_world(3, 3, {4});
  CHECK_THROWS_AS(reachable_set(w, 4, 1.0), Error);
  CHECK_THROWS_AS(reachable_set(w, 9, 1.0), Error);
  CHECK_THROWS_AS(reachable_set(w, -1, 1.0), Error);
}

TEST_CASE("action masks") {
  const GridWorld w = make_world(6, 6);
  SUBCASE("a UAV below its per-step consumption may only stay") {
    CHECK(action_mask(w, uav(0, 14, 3.0, 0.2, 0.3)) == std::vector<CellIndex>{14});
  }
  SUBCASE("a worker sees every cell within its radius") {
    CHECK(action_mask(w, worker(0, 14, 2.0)) == brute_reachable(w, 14, 2.0));
  }
  SUBCASE("pow equal to csp still moves") {
    CHECK(action_mask(w, uav(0, 14, 1.0, 0.3, 0.3)) == brute_reachable(w, 14, 1.0));
  }
  SUBCASE("accumulated rounding does not strand a UAV with exactly one move left") {
    const double pow = 1.0 - 0.3 - 0.3 - 0.3;  // 0.09999999999999998
    CHECK(action_mask(w, uav(0, 14, 1.0, pow, pow + 1e-12)).size() == 5);
  }
}

TEST_CASE("step completes a task when a UAV and a worker meet on it") {
  GridWorld w = make_world(3, 3, {}, {4});
  std::vector<AgentState> agents{uav(0, 0, 2.0), worker(1, 8, 2.0)};
  const std::vector<CellIndex> joint{4, 4};
  const StepOutcome out = step(w, agents, joint);
  CHECK(out.task_cpt == 1);
  CHECK(out.completed_cells == std::vector<CellIndex>{4});
  CHECK_FALSE(w.cell(4).task);
  CHECK(w.remaining_tasks() == 0);
  CHECK(w.initial_task_count() == 1);
}

TEST_CASE("a task needs both a UAV and a worker") {
  GridWorld w = make_world(3, 3, {}, {4});
  std::vector<AgentState> agents{uav(0, 0, 2.0), uav(1, 2, 2.0), car(2, 8, 2.0)};
  const std::vector<CellIndex> joint{4, 4, 4};
  CHECK(step(w, agents, joint).task_cpt == 0);
  CHECK(w.cell(4).task);
}

TEST_CASE("several pairs on one task cell count it once") {
  GridWorld w = make_world(3, 3, {}, {4});
  std::vector<AgentState> agents{uav(0, 0, 2.0), uav(1, 2, 2.0), worker(2, 6, 2.0), worker(3, 8, 2.0)};
  const std::vector<CellIndex> joint{4, 4, 4, 4};
  CHECK(step(w, agents, joint).task_cpt == 1);
}

TEST_CASE("battery drains by csp when no car is met") {
  GridWorld w = make_world(3, 3);
  std::vector<AgentState> agents{uav(0, 0, 2.0, 0.5, 0.3)};
  const std::vector<CellIndex> joint{1};
  const StepOutcome out = step(w, agents, joint);
  CHECK(agents[0].pow == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(out.swaps.empty());
  CHECK(out.mitig_sum == 0.0);
}

TEST_CASE("hovering in place also consumes power") {
  GridWorld w = make_world(3, 3);
  std::vector<AgentState> agents{uav(0, 4, 1.0, 0.9, 0.3)};
  const std::vector<CellIndex> joint{4};
  step(w, agents, joint);
  CHECK(agents[0].pow == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("a stopped UAV keeps its power and location") {
  GridWorld w = make_world(3, 3);
  std::vector<AgentState> agents{uav(0, 4, 1.0, 0.2, 0.3)};
  const std::vector<CellIndex> joint{4};
  step(w, agents, joint);
  CHECK(agents[0].pow == 0.2);
  CHECK(agents[0].loc == 4);
  const std::vector<CellIndex> move{5};
  CHECK_THROWS_AS(step(w, agents, move), Error);
}

TEST_CASE("meeting a car swaps the battery and credits urgency relief") {
  SUBCASE("from below csp") {
    GridWorld w = make_world(3, 3);
    std::vector<AgentState> agents{uav(0, 4, 1.0, 0.2, 0.3), car(1, 3, 1.0)};
    const std::vector<CellIndex> joint{4, 4};
    const StepOutcome out = step(w, agents, joint);
    CHECK(agents[0].pow == 1.0);
    CHECK(out.mitig_sum == doctest::Approx(1.0 - std::exp(-3.0)).epsilon(1e-12));
    CHECK(out.mitig_sum == doctest::Approx(0.950213).epsilon(1e-6));
    REQUIRE(out.swaps.size() == 1);
    CHECK(out.swaps[0] == Swap{0, 1, 0.2});
  }
  SUBCASE("from above csp") {
    GridWorld w = make_world(3, 3);
    std::vector<AgentState> agents{uav(0, 0, 2.0, 0.71, 0.3), car(1, 8, 2.0)};
    const std::vector<CellIndex> joint{4, 4};
    const StepOutcome out = step(w, agents, joint);
    CHECK(agents[0].pow == 1.0);
    CHECK(out.mitig_sum == doctest::Approx(std::exp(-1.0) - std::exp(-3.0)).epsilon(1e-12));
    CHECK(out.mitig_sum == doctest::Approx(0.318092).epsilon(1e-6));
  }
  SUBCASE("two cars on the cell swap once and record the lowest car id") {
    GridWorld w = make_world(3, 3);
    std::vector<AgentState> agents{uav(0, 4, 1.0, 0.5, 0.3), car(1, 4, 1.0), car(2, 4, 1.0)};
    const std::vector<CellIndex> joint{4, 4, 4};
    const StepOutcome out = step(w, agents, joint);
    REQUIRE(out.swaps.size() == 1);
    CHECK(out.swaps[0].car_id == 1);
    CHECK(out.mitig_sum == doctest::Approx(mitigation_reward(0.5, 0.3)));
  }
}

TEST_CASE("mitigation reward matches its closed form") {
  CHECK(mitigation_reward(0.2, 0.3) == doctest::Approx(1.0 - std::exp(-3.0)));
  CHECK(mitigation_reward(0.71, 0.3) == doctest::Approx(std::exp(-1.0) - std::exp(-3.0)));
  CHECK(mitigation_reward(1.0, 0.3) == doctest::Approx(std::exp(-2.0) - std::exp(-3.0)));
  CHECK(mitigation_reward(0.3, 0.3) == doctest::Approx(1.0 - std::exp(-3.0)));
}

TEST_CASE("masked actions are rejected before any mutation") {
  GridWorld w = make_world(4, 4, {}, {5});
  std::vector<AgentState> agents{uav(0, 0, 1.5), worker(1, 5, 1.0)};
  const GridWorld before_world = w;
  const auto before_agents = agents;
  const std::vector<CellIndex> joint{5, 15};
  try {
    step(w, agents, joint);
    FAIL("expected a masked-action error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MaskedAction);
    CHECK(std::string(e.what()).find("agent 1") != std::string::npos);
  }
  CHECK(w == before_world);
  CHECK(agents == before_agents);
  const std::vector<CellIndex> short_joint{0};
  try {
    step(w, agents, short_joint);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Dimension);
  }
  CHECK(agents == before_agents);
}

TEST_CASE("initial sweep") {
  SUBCASE("co-located UAV and worker on a task complete it at t=0") {
    GridWorld w = make_world(1, 1, {}, {0});
    const std::vector<AgentState> agents{uav(0, 0, 0.0), worker(1, 0, 0.0)};
    const StepOutcome out = initial_completion_sweep(w, agents);
    CHECK(out.task_cpt == 1);
    CHECK(w.remaining_tasks() == 0);
    CHECK(agents[0].pow == 1.0);
    CHECK(out.mitig_sum == 0.0);
  }
  SUBCASE("no co-location") {
    GridWorld w = make_world(2, 1, {}, {0, 1});
    const std::vector<AgentState> agents{uav(0, 0, 0.0), worker(1, 1, 0.0)};
    CHECK(initial_completion_sweep(w, agents).task_cpt == 0);
  }
  SUBCASE("a lone UAV completes nothing") {
    GridWorld w = make_world(1, 1, {}, {0});
    const std::vector<AgentState> agents{uav(0, 0, 0.0), car(1, 0, 0.0)};
    CHECK(initial_completion_sweep(w, agents).task_cpt == 0);
  }
}

TEST_CASE("completion rate") {
  std::vector<Cell> cells(120);
  for (auto& c : cells) c.task = true;
  GridWorld w(12, 10, cells);
  EpisodeTrace t;
  t.initial_task_count = 120;
  for (CellIndex c = 0; c < 43; ++c) w.clear_task(c);
  CHECK(completion_rate(t, w) == doctest::Approx(43.0 / 120.0));
  CHECK(completion_rate(t, w) == doctest::Approx(0.3583).epsilon(1e-4));
  GridWorld fresh(12, 10, cells);
  CHECK(completion_rate(t, fresh) == 0.0);
  const GridWorld empty = make_world(2, 2);
  EpisodeTrace none;
  CHECK_THROWS_AS(completion_rate(none, empty), Error);
}

TEST_CASE("episodes record routes, counts and powers per moment") {
  Scenario s;
  s.world = make_world(3, 3, {}, {4, 8});
  s.agents = {uav(0, 0, 2.0, 1.0, 0.3), worker(1, 8, 2.0), car(2, 2, 2.0)};
  s.time_limit = 2;
  Episode ep(s);
  ep.advance(std::vector<CellIndex>{4, 4, 2});
  ep.advance(std::vector<CellIndex>{4, 4, 4});
  CHECK(ep.done());
  const EpisodeTrace& t = ep.trace();
  CHECK(t.routes.size() == 3);
  for (const auto& r : t.routes) CHECK(r.size() == 3);
  CHECK(t.per_step_cpt == std::vector<int>{0, 1, 0});
  CHECK(t.per_step_swaps[2].size() == 1);
  CHECK(t.uav_power[0][1] == doctest::Approx(0.7));
  CHECK(t.uav_power[0][2] == 1.0);
  CHECK(t.completed() == 1);
  CHECK_THROWS_AS(ep.advance(std::vector<CellIndex>{4, 4, 4}), Error);
}

TEST_CASE("random rollouts keep every environment invariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    Scenario s = random_scenario(rng);
    Episode ep(s);
    int total = ep.initial_outcome().task_cpt;
    while (!ep.done()) {
      const GridWorld before = ep.world();
      const std::vector<AgentState> prev = ep.agents();
      std::vector<CellIndex> joint;
      for (const AgentState& a : prev) {
        const auto mask = action_mask(before, a);
        for (CellIndex c : mask) CHECK_FALSE(before.cell(c).obst);
        joint.push_back(mask[std::uniform_int_distribution<std::size_t>(0, mask.size() - 1)(rng)]);
      }
      const StepOutcome out = ep.advance(joint);
      total += out.task_cpt;
      CHECK(before.remaining_tasks() - ep.world().remaining_tasks() == out.task_cpt);
      for (CellIndex c = 0; c < before.cell_count(); ++c) {
        if (!before.cell(c).task) CHECK_FALSE(ep.world().cell(c).task);
      }
      for (std::size_t i = 0; i < prev.size(); ++i) {
        const AgentState& a = ep.agents()[i];
        CHECK_FALSE(ep.world().cell(a.loc).obst);
        if (!a.is_uav()) continue;
        CHECK(a.pow >= 0.0);
        CHECK(a.pow <= 1.0);
        if (prev[i].stopped()) CHECK(a.loc == prev[i].loc);
        const bool met = std::any_of(ep.agents().begin(), ep.agents().end(),
                                     [&](const AgentState& o) { return o.kind == AgentKind::Car && o.loc == a.loc; });
        if (met) {
          CHECK(a.pow == 1.0);
        } else if (prev[i].pow >= prev[i].csp - kPowerEpsilon) {
          CHECK(a.pow == doctest::Approx(std::max(0.0, prev[i].pow - prev[i].csp)).epsilon(1e-12));
        } else {
          CHECK(a.pow == prev[i].pow);
        }
      }
    }
    CHECK(total == ep.trace().completed());
    CHECK(ep.trace().completed() <= ep.world().initial_task_count());
    const EpisodeTrace again = replay(s, ep.trace());
    CHECK(again == ep.trace());
  }
}

TEST_CASE("replay rejects infeasible routes") {
  Scenario s;
  s.world = make_world(3, 3);
  s.agents = {uav(0, 0, 1.0)};
  s.time_limit = 1;
  EpisodeTrace t;
  t.horizon = 1;
  t.kinds = {AgentKind::Uav};
  t.routes = {{0, 8}};
  CHECK_THROWS_AS(replay(s, t), Error);
}

TEST_CASE("scenarios and traces round-trip through JSON") {
  std::mt19937_64 rng(3);
  const Scenario s = random_scenario(rng);
  const Scenario back = scenario_from_json(scenario_to_json(s));
  CHECK(back.world == s.world);
  CHECK(back.agents == s.agents);
  CHECK(back.time_limit == s.time_limit);

  Episode ep(s);
  while (!ep.done()) {
    std::vector<CellIndex> stay;
    for (const AgentState& a : ep.agents()) stay.push_back(a.loc);
    ep.advance(stay);
  }
  CHECK(trace_from_json(parse_json(trace_to_json(ep.trace()).dump(), "t")) == ep.trace());

  Json bad = scenario_to_json(s);
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(scenario_from_json(bad), Error);
}

}  // TEST_SUITE
