#include "relief/observation.hpp"

#include <cmath>

#include "relief/error.hpp"

namespace relief {

double urgency(double pow, double csp, AgentKind kind) {
  if (kind != AgentKind::Uav) return 0.0;
  if (!(csp > 0.0)) throw Error(ErrorCode::InvalidArgument, "urgency needs csp > 0 for a UAV");
  if (!(pow >= 0.0 && pow <= 1.0)) throw Error(ErrorCode::InvalidArgument, "urgency needs pow in [0,1]");
  return std::exp(-std::floor(pow / csp + kPowerEpsilon));
}

std::vector<float> GlobalChannels::flatten() const {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(kChannelCount * height * width));
  for (const auto* grid : ordered()) {
    for (double v : *grid) out.push_back(static_cast<float>(v));
  }
  return out;
}

std::vector<double> LocalFeatures::loc_onehot() const {
  std::vector<double> v(static_cast<std::size_t>(cell_count), 0.0);
  v.at(static_cast<std::size_t>(loc)) = 1.0;
  return v;
}

std::vector<double> LocalFeatures::agent_id_onehot() const {
  std::vector<double> v(static_cast<std::size_t>(agent_count), 0.0);
  v.at(static_cast<std::size_t>(agent_id)) = 1.0;
  return v;
}

GlobalChannels build_global(const GridWorld& world, std::span<const AgentState> agents) {
  GlobalChannels g;
  g.height = world.height();
  g.width = world.width();
  const auto n = static_cast<std::size_t>(world.cell_count());
  g.obst_dist.assign(n, 0.0);
  g.task_dist.assign(n, 0.0);
  g.urge_dist.assign(n, 0.0);
  g.work_dist.assign(n, 0.0);
  g.car_dist.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Cell& c = world.cells()[i];
    g.obst_dist[i] = c.obst ? 1.0 : 0.0;
    g.task_dist[i] = c.task ? 1.0 : 0.0;
  }
  for (const AgentState& a : agents) {
    const auto i = static_cast<std::size_t>(a.loc);
    switch (a.kind) {
      case AgentKind::Uav: g.urge_dist.at(i) += urgency(a.pow, a.csp, a.kind); break;
      case AgentKind::Worker: g.work_dist.at(i) += 1.0; break;
      case AgentKind::Car: g.car_dist.at(i) += 1.0; break;
    }
  }
  return g;
}

std::vector<LocalFeatures> build_locals(const GridWorld& world, std::span<const AgentState> agents) {
  std::vector<LocalFeatures> out;
  out.reserve(agents.size());
  for (const AgentState& a : agents) {
    out.push_back(LocalFeatures{a.loc, a.id, world.cell_count(), static_cast<int>(agents.size()),
                                urgency(a.pow, a.csp, a.kind)});
  }
  return out;
}

ObservationBundle build_bundle(const GridWorld& world, std::span<const AgentState> agents) {
  ObservationBundle b;
  b.channels = build_global(world, agents);
  b.locals = build_locals(world, agents);
  b.masks.reserve(agents.size());
  for (const AgentState& a : agents) b.masks.push_back(action_mask(world, a));
  return b;
}

Json bundle_to_json(const ObservationBundle& bundle) {
  const GlobalChannels& g = bundle.channels;
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["height"] = g.height;
  doc["width"] = g.width;
  doc["channels"] = {{"obst_dist", g.obst_dist}, {"task_dist", g.task_dist}, {"urge_dist", g.urge_dist},
                     {"work_dist", g.work_dist}, {"car_dist", g.car_dist}};
  Json locals = Json::array();
  for (std::size_t i = 0; i < bundle.locals.size(); ++i) {
    const LocalFeatures& l = bundle.locals[i];
    locals.push_back({{"agent_id", l.agent_id}, {"loc", l.loc}, {"urge", l.urge}, {"mask", bundle.masks.at(i)}});
  }
  doc["agents"] = locals;
  return doc;
}

ObservationBundle bundle_from_json(const Json& doc) {
  check_schema_version(doc, "bundle");
  ObservationBundle b;
  try {
    GlobalChannels& g = b.channels;
    g.height = doc.at("height").get<int>();
    g.width = doc.at("width").get<int>();
    const Json& ch = doc.at("channels");
    g.obst_dist = ch.at("obst_dist").get<std::vector<double>>();
    g.task_dist = ch.at("task_dist").get<std::vector<double>>();
    g.urge_dist = ch.at("urge_dist").get<std::vector<double>>();
    g.work_dist = ch.at("work_dist").get<std::vector<double>>();
    g.car_dist = ch.at("car_dist").get<std::vector<double>>();
    const Json& agents = doc.at("agents");
    for (const Json& a : agents) {
      b.locals.push_back(LocalFeatures{a.at("loc").get<CellIndex>(), a.at("agent_id").get<int>(),
                                       g.height * g.width, static_cast<int>(agents.size()),
                                       a.at("urge").get<double>()});
      b.masks.push_back(a.at("mask").get<std::vector<CellIndex>>());
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("bundle: ") + e.what());
  }
  return b;
}

}  // namespace relief
