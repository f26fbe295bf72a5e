#include "relief/io.hpp"

#include <fstream>
#include <sstream>

#include "relief/error.hpp"

namespace relief {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Parse, origin + ": " + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  return parse_json(read_text_file(path), path.string());
}

void check_schema_version(const Json& doc, const std::string& origin) {
  if (!doc.is_object()) throw Error(ErrorCode::Parse, origin + ": expected a JSON object");
  if (doc.contains("schema_version") && doc.at("schema_version") != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersion, origin + ": unsupported schema_version " +
                                              doc.at("schema_version").dump());
  }
}

namespace {

template <class T>
T field(const Json& doc, const char* key, const std::string& origin) {
  if (!doc.contains(key)) throw Error(ErrorCode::Parse, origin + ": missing key '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, origin + ": bad value for '" + key + "': " + e.what());
  }
}

void append_agents(const Json& doc, const char* key, AgentKind kind, std::vector<AgentState>& agents) {
  if (!doc.contains(key)) return;
  for (const Json& entry : doc.at(key)) {
    AgentState a;
    a.kind = kind;
    a.id = static_cast<int>(agents.size());
    a.loc = field<CellIndex>(entry, "loc", key);
    a.radius = field<double>(entry, "radius", key);
    if (kind == AgentKind::Uav) {
      a.csp = field<double>(entry, "csp", key);
      a.pow = entry.value("pow", 1.0);
    }
    agents.push_back(a);
  }
}

}  // namespace

Json scenario_to_json(const Scenario& scenario) {
  const GridWorld& w = scenario.world;
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["width"] = w.width();
  doc["height"] = w.height();
  Json obstacles = Json::array();
  Json tasks = Json::array();
  for (CellIndex c = 0; c < w.cell_count(); ++c) {
    if (w.cell(c).obst) obstacles.push_back(c);
    if (w.cell(c).task) tasks.push_back(c);
  }
  doc["obstacles"] = obstacles;
  doc["tasks"] = tasks;
  Json uavs = Json::array(), workers = Json::array(), cars = Json::array();
  for (const AgentState& a : scenario.agents) {
    Json e{{"loc", a.loc}, {"radius", a.radius}};
    switch (a.kind) {
      case AgentKind::Uav:
        e["csp"] = a.csp;
        if (a.pow != 1.0) e["pow"] = a.pow;
        uavs.push_back(e);
        break;
      case AgentKind::Worker: workers.push_back(e); break;
      case AgentKind::Car: cars.push_back(e); break;
    }
  }
  doc["uavs"] = uavs;
  doc["workers"] = workers;
  doc["cars"] = cars;
  doc["time_limit"] = scenario.time_limit;
  return doc;
}

Scenario scenario_from_json(const Json& doc) {
  const std::string origin = "scenario";
  check_schema_version(doc, origin);
  const int width = field<int>(doc, "width", origin);
  const int height = field<int>(doc, "height", origin);
  if (width <= 0 || height <= 0) throw Error(ErrorCode::Parse, "scenario: dimensions must be positive");
  std::vector<Cell> cells(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  auto mark = [&](const char* key, bool Cell::*flag) {
    for (const Json& v : doc.value(key, Json::array())) {
      const auto c = v.get<long long>();
      if (c < 0 || c >= static_cast<long long>(cells.size())) {
        throw Error(ErrorCode::Parse, std::string("scenario: ") + key + " cell out of range");
      }
      cells[static_cast<std::size_t>(c)].*flag = true;
    }
  };
  mark("obstacles", &Cell::obst);
  mark("tasks", &Cell::task);

  Scenario s;
  s.world = GridWorld(width, height, std::move(cells));
  append_agents(doc, "uavs", AgentKind::Uav, s.agents);
  append_agents(doc, "workers", AgentKind::Worker, s.agents);
  append_agents(doc, "cars", AgentKind::Car, s.agents);
  s.time_limit = field<int>(doc, "time_limit", origin);
  validate_agents(s.world, s.agents);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(read_json_file(path));
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_text_file(path, scenario_to_json(scenario).dump(2) + "\n");
}

Json trace_to_json(const EpisodeTrace& trace) {
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["horizon"] = trace.horizon;
  doc["initial_task_count"] = trace.initial_task_count;
  Json routes{{"uavs", Json::array()}, {"workers", Json::array()}, {"cars", Json::array()}};
  for (std::size_t i = 0; i < trace.routes.size(); ++i) {
    const char* key = trace.kinds[i] == AgentKind::Uav      ? "uavs"
                      : trace.kinds[i] == AgentKind::Worker ? "workers"
                                                            : "cars";
    routes[key].push_back(trace.routes[i]);
  }
  doc["routes"] = routes;
  doc["per_step_cpt"] = trace.per_step_cpt;
  Json swaps = Json::array();
  for (const auto& moment : trace.per_step_swaps) {
    Json m = Json::array();
    for (const Swap& s : moment) m.push_back({{"uav", s.uav_id}, {"car", s.car_id}, {"prev_pow", s.prev_pow}});
    swaps.push_back(m);
  }
  doc["per_step_swaps"] = swaps;
  doc["uav_power"] = trace.uav_power;
  return doc;
}

EpisodeTrace trace_from_json(const Json& doc) {
  const std::string origin = "trace";
  check_schema_version(doc, origin);
  EpisodeTrace t;
  t.horizon = field<int>(doc, "horizon", origin);
  t.initial_task_count = doc.value("initial_task_count", 0);
  const Json& routes = doc.at("routes");
  for (auto [key, kind] : {std::pair{"uavs", AgentKind::Uav}, std::pair{"workers", AgentKind::Worker},
                           std::pair{"cars", AgentKind::Car}}) {
    for (const Json& r : routes.value(key, Json::array())) {
      t.kinds.push_back(kind);
      t.routes.push_back(r.get<std::vector<CellIndex>>());
    }
  }
  t.per_step_cpt = field<std::vector<int>>(doc, "per_step_cpt", origin);
  for (const Json& moment : doc.value("per_step_swaps", Json::array())) {
    std::vector<Swap> m;
    for (const Json& s : moment) {
      m.push_back(Swap{s.at("uav").get<int>(), s.at("car").get<int>(), s.at("prev_pow").get<double>()});
    }
    t.per_step_swaps.push_back(std::move(m));
  }
  t.uav_power = doc.value("uav_power", std::vector<std::vector<double>>{});
  return t;
}

}  // namespace relief
