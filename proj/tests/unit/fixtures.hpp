#ifndef RELIEF_TESTS_FIXTURES_HPP_
#define RELIEF_TESTS_FIXTURES_HPP_

#include <cmath>
#include <initializer_list>
#include <random>
#include <vector>

#include "relief/gridworld.hpp"

namespace fixtures {

using namespace relief;

inline GridWorld make_world(int w, int h, std::initializer_list<CellIndex> obstacles = {},
                            std::initializer_list<CellIndex> tasks = {}) {
  std::vector<Cell> cells(static_cast<std::size_t>(w * h));
  for (CellIndex c : obstacles) cells[static_cast<std::size_t>(c)].obst = true;
  for (CellIndex c : tasks) cells[static_cast<std::size_t>(c)].task = true;
  return GridWorld(w, h, cells);
}

inline AgentState uav(int id, CellIndex loc, double radius, double pow = 1.0, double csp = 0.3) {
  return AgentState{AgentKind::Uav, id, loc, radius, pow, csp};
}
inline AgentState worker(int id, CellIndex loc, double radius) {
  return AgentState{AgentKind::Worker, id, loc, radius, 1.0, 0.0};
}
inline AgentState car(int id, CellIndex loc, double radius) {
  return AgentState{AgentKind::Car, id, loc, radius, 1.0, 0.0};
}

// Brute-force reachable set: scan every cell, keep free cells within radius.
inline std::vector<CellIndex> brute_reachable(const GridWorld& w, CellIndex loc, double radius) {
  std::vector<CellIndex> out;
  const int r0 = loc / w.width(), c0 = loc % w.width();
  for (int r = 0; r < w.height(); ++r) {
    for (int c = 0; c < w.width(); ++c) {
      const double d = std::hypot(r - r0, c - c0);
      if (d <= radius && !w.cell(r * w.width() + c).obst) out.push_back(r * w.width() + c);
    }
  }
  return out;
}

// Random small scenario with obstacles, tasks and agents of all kinds.
inline Scenario random_scenario(std::mt19937_64& rng, int max_side = 7) {
  std::uniform_int_distribution<int> side(2, max_side);
  const int w = side(rng), h = side(rng);
  std::vector<Cell> cells(static_cast<std::size_t>(w * h));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& c : cells) {
    if (u(rng) < 0.15) {
      c.obst = true;
    } else if (u(rng) < 0.4) {
      c.task = true;
    }
  }
  cells[0].obst = false;
  std::vector<CellIndex> free;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].obst) free.push_back(static_cast<CellIndex>(i));
  }
  Scenario s;
  s.world = GridWorld(w, h, cells);
  s.time_limit = 6;
  std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
  std::uniform_int_distribution<int> count(1, 3);
  const int nu = count(rng), nw = count(rng), nc = count(rng) - 1;
  int id = 0;
  for (int i = 0; i < nu; ++i, ++id) {
    s.agents.push_back(uav(id, free[pick(rng)], 0.5 + 3.0 * u(rng), 0.2 + 0.8 * u(rng), 0.1 + 0.4 * u(rng)));
  }
  for (int i = 0; i < nw; ++i, ++id) s.agents.push_back(worker(id, free[pick(rng)], 3.0 * u(rng)));
  for (int i = 0; i < nc; ++i, ++id) s.agents.push_back(car(id, free[pick(rng)], 3.0 * u(rng)));
  return s;
}

}  // namespace fixtures

#endif  // RELIEF_TESTS_FIXTURES_HPP_
