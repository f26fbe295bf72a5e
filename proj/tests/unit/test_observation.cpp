#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "relief/error.hpp"
#include "relief/observation.hpp"

using namespace relief;
using namespace fixtures;

TEST_SUITE("observation") {

TEST_CASE("urgency") {
  CHECK(urgency(1.0, 0.3, AgentKind::Uav) == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
  CHECK(urgency(1.0, 0.3, AgentKind::Uav) == doctest::Approx(0.049787).epsilon(1e-5));
  CHECK(urgency(0.0, 0.3, AgentKind::Uav) == 1.0);
  CHECK(urgency(0.0, 0.7, AgentKind::Uav) == 1.0);
  CHECK(urgency(0.5, 0.3, AgentKind::Worker) == 0.0);
  CHECK(urgency(0.5, 0.3, AgentKind::Car) == 0.0);
  // 1 - 3 * 0.3 leaves exactly one move's worth within rounding.
  CHECK(urgency(1.0 - 0.3 - 0.3 - 0.3, 0.1, AgentKind::Uav) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("urgency is nonincreasing in power") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double csp = 0.05 + 0.5 * u(rng);
    const double a = u(rng), b = u(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(urgency(hi, csp, AgentKind::Uav) <= urgency(lo, csp, AgentKind::Uav));
    CHECK(urgency(lo, csp, AgentKind::Uav) <= 1.0);
    CHECK(urgency(hi, csp, AgentKind::Uav) > 0.0);
  }
}

TEST_CASE("a world with no agents mirrors obstacles and tasks only") {
  const GridWorld w = make_world(3, 2, {1}, {2, 5});
  const GlobalChannels g = build_global(w, {});
  CHECK(g.height == 2);
  CHECK(g.width == 3);
  CHECK(g.obst_dist == std::vector<double>{0, 1, 0, 0, 0, 0});
  CHECK(g.task_dist == std::vector<double>{0, 0, 1, 0, 0, 1});
  CHECK(g.urge_dist == std::vector<double>(6, 0.0));
  CHECK(g.work_dist == std::vector<double>(6, 0.0));
  CHECK(g.car_dist == std::vector<double>(6, 0.0));
}

TEST_CASE("agent channels count co-located agents and add urgencies") {
  const GridWorld w = make_world(3, 3);
  SUBCASE("two workers on one cell") {
    const std::vector<AgentState> agents{worker(0, 4, 1.0), worker(1, 4, 1.0), car(2, 0, 1.0)};
    const GlobalChannels g = build_global(w, agents);
    CHECK(g.work_dist[4] == 2.0);
    CHECK(g.car_dist[0] == 1.0);
    CHECK(g.urge_dist == std::vector<double>(9, 0.0));
  }
  SUBCASE("two UAVs on one cell") {
    // pow 0.9 csp 0.3 gives e^-3; pow 0 gives 1.
    const std::vector<AgentState> agents{uav(0, 4, 1.0, 0.9, 0.3), uav(1, 4, 1.0, 0.0, 0.3)};
    const GlobalChannels g = build_global(w, agents);
    CHECK(g.urge_dist[4] == doctest::Approx(std::exp(-3.0) + 1.0));
    const std::vector<AgentState> pair{uav(0, 4, 1.0, 0.9, 0.3), uav(1, 4, 1.0, 0.0, 0.3)};
    double sum = 0.0;
    for (const AgentState& a : pair) sum += urgency(a.pow, a.csp, a.kind);
    CHECK(g.urge_dist[4] == doctest::Approx(sum));
  }
}

TEST_CASE("flattening is channel-major") {
  const GridWorld w = make_world(2, 2, {0}, {3});
  const std::vector<AgentState> agents{uav(0, 1, 1.0, 1.0, 0.3), worker(1, 2, 1.0), car(2, 3, 1.0)};
  const GlobalChannels g = build_global(w, agents);
  const std::vector<float> flat = g.flatten();
  REQUIRE(flat.size() == 20);
  const auto ordered = g.ordered();
  for (int ch = 0; ch < kChannelCount; ++ch) {
    for (int c = 0; c < 4; ++c) CHECK(flat[static_cast<std::size_t>(ch * 4 + c)] == static_cast<float>((*ordered[ch])[c]));
  }
}

TEST_CASE("locals and bundles") {
  const GridWorld w = make_world(4, 4);
  const std::vector<AgentState> agents{uav(0, 5, 1.0, 0.2, 0.3), worker(1, 6, 2.0), car(2, 15, 1.0)};
  const ObservationBundle b = build_bundle(w, agents);
  CHECK(b.locals.size() == agents.size());
  CHECK(b.masks.size() == agents.size());
  CHECK(b.masks[0] == std::vector<CellIndex>{5});
  CHECK(b.masks[1] == brute_reachable(w, 6, 2.0));
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const LocalFeatures& l = b.locals[i];
    CHECK(l.loc == agents[i].loc);
    CHECK(l.agent_id == static_cast<int>(i));
    const auto loc = l.loc_onehot();
    const auto id = l.agent_id_onehot();
    CHECK(loc.size() == 16);
    CHECK(id.size() == 3);
    CHECK(std::accumulate(loc.begin(), loc.end(), 0.0) == 1.0);
    CHECK(loc[static_cast<std::size_t>(l.loc)] == 1.0);
    CHECK(id[i] == 1.0);
    CHECK(l.urge == urgency(agents[i].pow, agents[i].csp, agents[i].kind));
  }
}

TEST_CASE("bundles round-trip through JSON exactly") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Scenario s = random_scenario(rng);
    const ObservationBundle b = build_bundle(s.world, s.agents);
    CHECK(bundle_from_json(parse_json(bundle_to_json(b).dump(), "bundle")) == b);
  }
}

}  // TEST_SUITE
