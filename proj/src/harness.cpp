#include "relief/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "relief/error.hpp"

namespace relief {

double Interval::draw(std::mt19937_64& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

namespace {

const char* task_placement_name(TaskPlacement p) { return p == TaskPlacement::Random ? "random" : "checkin"; }

const char* start_placement_name(StartPlacement p) {
  switch (p) {
    case StartPlacement::Same: return "same";
    case StartPlacement::Random: return "random";
    case StartPlacement::Checkin: return "checkin";
  }
  return "?";
}

Json interval_to_json(const Interval& v) {
  if (v.lo == v.hi) return v.lo;
  return Json::array({v.lo, v.hi});
}

Interval interval_from_json(const Json& v, const std::string& what) {
  if (v.is_number()) return {v.get<double>(), v.get<double>()};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    return {v[0].get<double>(), v[1].get<double>()};
  }
  throw Error(ErrorCode::Config, "recipe: " + what + " must be a number or a [lo, hi] pair");
}

}  // namespace

void ScenarioRecipe::validate() const {
  auto fail = [this](const std::string& what) {
    throw Error(ErrorCode::Config, "recipe" + (name.empty() ? std::string() : " '" + name + "'") + ": " + what);
  };
  if (width <= 0 || height <= 0) fail("grid dims must be positive");
  if (obstacles < 0 || tasks < 0) fail("obstacle and task counts must be nonnegative");
  if (obstacles + tasks > width * height) fail("obstacles + tasks exceed the cell count");
  if (obstacles >= width * height) fail("no free cell is left for the agents");
  if (uavs < 0 || workers < 0 || cars < 0) fail("agent counts must be nonnegative");
  for (const auto& [iv, what] : {std::pair{&uav_radius, "uav radius"}, std::pair{&worker_radius, "worker radius"},
                                 std::pair{&car_radius, "car radius"}}) {
    if (!(iv->lo <= iv->hi) || iv->lo < 0.0) fail(std::string(what) + " interval must satisfy 0 <= lo <= hi");
  }
  if (!(csp.lo <= csp.hi) || !(csp.lo > 0.0) || csp.hi > 1.0) fail("csp interval must lie in (0,1] with lo <= hi");
  if (time_limit < 0) fail("time_limit must be nonnegative");
}

Json ScenarioRecipe::to_json() const {
  Json doc{{"schema_version", kSchemaVersion},
           {"name", name},
           {"width", width},
           {"height", height},
           {"obstacles", obstacles},
           {"tasks", tasks},
           {"task_placement", task_placement_name(task_placement)},
           {"start_placement", start_placement_name(start_placement)},
           {"agents", {{"uavs", uavs}, {"workers", workers}, {"cars", cars}}},
           {"radius",
            {{"uav", interval_to_json(uav_radius)},
             {"worker", interval_to_json(worker_radius)},
             {"car", interval_to_json(car_radius)}}},
           {"csp", interval_to_json(csp)},
           {"time_limit", time_limit},
           {"seed", seed}};
  if (!density_file.empty()) doc["density_file"] = density_file.string();
  return doc;
}

ScenarioRecipe ScenarioRecipe::from_json(const Json& doc, const std::filesystem::path& base_dir) {
  check_schema_version(doc, "recipe");
  ScenarioRecipe r;
  try {
    r.name = doc.value("name", std::string());
    r.width = doc.at("width").get<int>();
    r.height = doc.at("height").get<int>();
    r.obstacles = doc.value("obstacles", 0);
    r.tasks = doc.at("tasks").get<int>();
    const auto tp = doc.value("task_placement", std::string("random"));
    if (tp == "random") {
      r.task_placement = TaskPlacement::Random;
    } else if (tp == "checkin") {
      r.task_placement = TaskPlacement::Checkin;
    } else {
      throw Error(ErrorCode::Config, "recipe: task_placement must be random or checkin");
    }
    const auto sp = doc.value("start_placement", std::string("random"));
    if (sp == "same") {
      r.start_placement = StartPlacement::Same;
    } else if (sp == "random") {
      r.start_placement = StartPlacement::Random;
    } else if (sp == "checkin") {
      r.start_placement = StartPlacement::Checkin;
    } else {
      throw Error(ErrorCode::Config, "recipe: start_placement must be same, random or checkin");
    }
    const Json& agents = doc.at("agents");
    r.uavs = agents.value("uavs", 0);
    r.workers = agents.value("workers", 0);
    r.cars = agents.value("cars", 0);
    const Json& radius = doc.at("radius");
    r.uav_radius = interval_from_json(radius.at("uav"), "uav radius");
    r.worker_radius = interval_from_json(radius.at("worker"), "worker radius");
    r.car_radius = interval_from_json(radius.at("car"), "car radius");
    r.csp = interval_from_json(doc.at("csp"), "csp");
    r.time_limit = doc.value("time_limit", r.time_limit);
    r.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("density_file")) {
      std::filesystem::path p = doc.at("density_file").get<std::string>();
      r.density_file = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("recipe: ") + e.what());
  }
  r.validate();
  return r;
}

ScenarioRecipe load_recipe(const std::filesystem::path& path) {
  ScenarioRecipe r = ScenarioRecipe::from_json(read_json_file(path), path.parent_path());
  if (r.name.empty()) r.name = path.stem().string();
  return r;
}

namespace {

void normalize(DensityGrid& d, const std::string& origin) {
  double total = 0.0;
  for (double v : d.mass) total += v;
  if (!(total > 0.0) || !std::isfinite(total)) throw Error(ErrorCode::Generation, origin + ": density has no mass");
  for (double& v : d.mass) v /= total;
}

}  // namespace

DensityGrid load_density(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  check_schema_version(doc, path.string());
  DensityGrid d;
  try {
    d.height = doc.at("height").get<int>();
    d.width = doc.at("width").get<int>();
    d.mass = doc.at("density").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  if (d.height <= 0 || d.width <= 0 || d.mass.size() != static_cast<std::size_t>(d.height) * d.width) {
    throw Error(ErrorCode::Dimension, path.string() + ": density must hold height*width entries");
  }
  for (double v : d.mass) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::Parse, path.string() + ": negative density entry");
  }
  normalize(d, path.string());
  return d;
}

void save_density(const DensityGrid& density, const std::filesystem::path& path) {
  const Json doc{{"schema_version", kSchemaVersion},
                 {"height", density.height},
                 {"width", density.width},
                 {"density", density.mass}};
  write_text_file(path, doc.dump(2) + "\n");
}

DensityGrid mask_density(const DensityGrid& density, const GridWorld& world) {
  if (density.height != world.height() || density.width != world.width()) {
    throw Error(ErrorCode::Dimension, "density grid is " + std::to_string(density.height) + "x" +
                                          std::to_string(density.width) + ", world is " +
                                          std::to_string(world.height()) + "x" + std::to_string(world.width()));
  }
  DensityGrid out = density;
  for (CellIndex c = 0; c < world.cell_count(); ++c) {
    if (world.cell(c).obst) out.mass[static_cast<std::size_t>(c)] = 0.0;
  }
  normalize(out, "masked density");
  return out;
}

DensityGrid synth_density(const ScenarioRecipe& recipe, std::uint64_t seed, const GridWorld* world) {
  std::mt19937_64 rng(seed);
  DensityGrid d;
  d.height = recipe.height;
  d.width = recipe.width;
  d.mass.assign(static_cast<std::size_t>(d.height) * d.width, 0.0);
  const double span = std::min(d.height, d.width);
  std::uniform_real_distribution<double> row(0.0, d.height - 1.0), col(0.0, d.width - 1.0);
  std::uniform_real_distribution<double> spread(0.12 * span, 0.3 * span), weight(0.5, 1.5);
  for (int bump = 0; bump < 3; ++bump) {
    const double cy = row(rng), cx = col(rng), sigma = std::max(spread(rng), 0.5), w = weight(rng);
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        d.mass[static_cast<std::size_t>(y * d.width + x)] += w * std::exp(-r2 / (2.0 * sigma * sigma));
      }
    }
  }
  normalize(d, "synthetic density");
  return world != nullptr ? mask_density(d, *world) : d;
}

namespace {

// Weighted sampling without replacement over cells with positive weight.
std::vector<CellIndex> sample_weighted(std::vector<double> weights, int count, std::mt19937_64& rng,
                                       const std::string& what) {
  std::vector<CellIndex> out;
  for (int k = 0; k < count; ++k) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) {
      throw Error(ErrorCode::Generation, "cannot place " + std::to_string(count) + " " + what + ": only " +
                                             std::to_string(k) + " cells carry probability mass");
    }
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      pick = i;
      if (u < weights[i]) break;
      u -= weights[i];
    }
    out.push_back(static_cast<CellIndex>(pick));
    weights[pick] = 0.0;
  }
  return out;
}

CellIndex sample_one(const std::vector<double>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return static_cast<CellIndex>(pick(rng));
}

}  // namespace

Scenario generate(const ScenarioRecipe& recipe, std::uint64_t seed) {
  recipe.validate();
  std::mt19937_64 rng(seed);
  const int cells = recipe.width * recipe.height;

  std::vector<Cell> grid(static_cast<std::size_t>(cells));
  const auto obstacles = sample_weighted(std::vector<double>(grid.size(), 1.0), recipe.obstacles, rng, "obstacles");
  for (CellIndex c : obstacles) grid[static_cast<std::size_t>(c)].obst = true;
  const GridWorld bare(recipe.width, recipe.height, grid);

  std::vector<double> free_weight(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) free_weight[i] = grid[i].obst ? 0.0 : 1.0;

  std::optional<DensityGrid> density;
  if (recipe.uses_density()) {
    density = recipe.density_file.empty() ? synth_density(recipe, rng(), &bare)
                                          : mask_density(load_density(recipe.density_file), bare);
  }

  const std::vector<double>& task_weight =
      recipe.task_placement == TaskPlacement::Checkin ? density->mass : free_weight;
  for (CellIndex c : sample_weighted(task_weight, recipe.tasks, rng, "tasks")) {
    grid[static_cast<std::size_t>(c)].task = true;
  }

  Scenario s;
  s.world = GridWorld(recipe.width, recipe.height, std::move(grid));
  s.time_limit = recipe.time_limit;

  const int total = recipe.uavs + recipe.workers + recipe.cars;
  std::vector<CellIndex> starts;
  switch (recipe.start_placement) {
    case StartPlacement::Same: starts.assign(static_cast<std::size_t>(total), sample_one(free_weight, rng)); break;
    case StartPlacement::Random:
      for (int i = 0; i < total; ++i) starts.push_back(sample_one(free_weight, rng));
      break;
    case StartPlacement::Checkin:
      for (int i = 0; i < total; ++i) starts.push_back(sample_one(density->mass, rng));
      break;
  }

  int id = 0;
  auto add = [&](AgentKind kind, int count, const Interval& radius) {
    for (int k = 0; k < count; ++k, ++id) {
      AgentState a;
      a.kind = kind;
      a.id = id;
      a.loc = starts[static_cast<std::size_t>(id)];
      a.radius = radius.draw(rng);
      if (kind == AgentKind::Uav) {
        a.pow = 1.0;
        a.csp = recipe.csp.draw(rng);
      }
      s.agents.push_back(a);
    }
  };
  add(AgentKind::Uav, recipe.uavs, recipe.uav_radius);
  add(AgentKind::Worker, recipe.workers, recipe.worker_radius);
  add(AgentKind::Car, recipe.cars, recipe.car_radius);
  validate_agents(s.world, s.agents);
  return s;
}

std::shared_ptr<const Policy> make_policy(const std::string& name) {
  if (name == "greedy") return std::make_shared<GreedyPolicy>();
  if (name == "random") return std::make_shared<RandomPolicy>();
  const std::filesystem::path path(name);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::Io, "policy '" + name + "' is neither greedy, random nor an existing checkpoint");
  }
  return std::make_shared<LearnedPolicy>(PolicyCheckpoint::load(path), path.stem().string());
}

int eval_thread_count(int requested) {
  int n = requested;
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RELIEF_SWARM_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) n = n > 0 ? std::min(n, cap) : cap;
    }
  }
  return std::max(n, 1);
}

EvalReport run_eval(std::span<const NamedPolicy> policies, std::span<const ScenarioRecipe> recipes,
                    std::span<const std::uint64_t> seeds, int time_limit, int threads) {
  if (time_limit < 0) throw Error(ErrorCode::InvalidArgument, "time limit must be nonnegative");
  for (const NamedPolicy& p : policies) {
    if (!p.policy) throw Error(ErrorCode::InvalidArgument, "policy '" + p.label + "' is empty");
  }

  EvalReport report;
  report.time_limit = time_limit;
  const std::size_t per_policy = recipes.size() * seeds.size();
  report.episodes.resize(policies.size() * per_policy);

  // Scenarios are shared across policies; generate and check them up front.
  std::vector<Scenario> scenarios;
  for (const ScenarioRecipe& r : recipes) {
    for (std::uint64_t seed : seeds) {
      Scenario s = generate(r, seed);
      s.time_limit = time_limit;
      if (s.world.initial_task_count() == 0) {
        throw Error(ErrorCode::Config, "recipe '" + r.name + "' produced no tasks; completion rate is undefined");
      }
      for (const NamedPolicy& p : policies) p.policy->check_compatible(s);
      scenarios.push_back(std::move(s));
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < report.episodes.size(); job = next++) {
      try {
        const std::size_t p = job / per_policy;
        const std::size_t rs = job % per_policy;
        const std::size_t r = rs / seeds.size();
        const std::uint64_t seed = seeds[rs % seeds.size()];
        EpisodeRecord& rec = report.episodes[job];
        rec.policy = policies[p].label;
        rec.recipe = recipes[r].name;
        rec.seed = seed;
        rec.trace = run_episode(scenarios[rs], *policies[p].policy, seed);
        rec.initial_tasks = rec.trace.initial_task_count;
        rec.completed = rec.trace.completed();
        rec.rate = static_cast<double>(rec.completed) / static_cast<double>(rec.initial_tasks);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::min<int>(eval_thread_count(threads), static_cast<int>(std::max<std::size_t>(report.episodes.size(), 1)));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t p = 0; p < policies.size(); ++p) {
    for (std::size_t r = 0; r < recipes.size(); ++r) {
      PolicySummary sum;
      sum.policy = policies[p].label;
      sum.recipe = recipes[r].name;
      sum.mean_curve.assign(static_cast<std::size_t>(time_limit) + 1, 0.0);
      std::vector<double> rates;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const EpisodeRecord& rec = report.episodes[p * per_policy + r * seeds.size() + s];
        rates.push_back(rec.rate);
        for (std::size_t t = 0; t < rec.trace.per_step_cpt.size(); ++t) {
          sum.mean_curve[t] += rec.trace.per_step_cpt[t];
        }
        for (const auto& moment : rec.trace.per_step_swaps) sum.total_swaps += static_cast<int>(moment.size());
      }
      sum.episodes = static_cast<int>(rates.size());
      if (!rates.empty()) {
        sum.mean_rate = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
        for (double& v : sum.mean_curve) v /= static_cast<double>(rates.size());
      }
      if (rates.size() > 1) {
        double ss = 0.0;
        for (double v : rates) ss += (v - sum.mean_rate) * (v - sum.mean_rate);
        sum.stddev_rate = std::sqrt(ss / static_cast<double>(rates.size() - 1));
      }
      report.summaries.push_back(std::move(sum));
    }
  }
  return report;
}

Json EvalReport::to_json() const {
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["time_limit"] = time_limit;
  Json sums = Json::array();
  for (const PolicySummary& s : summaries) {
    sums.push_back({{"policy", s.policy},
                    {"recipe", s.recipe},
                    {"episodes", s.episodes},
                    {"mean_rate", s.mean_rate},
                    {"stddev_rate", s.stddev_rate},
                    {"mean_curve", s.mean_curve},
                    {"total_swaps", s.total_swaps}});
  }
  doc["summaries"] = sums;
  Json eps = Json::array();
  for (const EpisodeRecord& e : episodes) {
    eps.push_back({{"policy", e.policy},
                   {"recipe", e.recipe},
                   {"seed", e.seed},
                   {"initial_tasks", e.initial_tasks},
                   {"completed", e.completed},
                   {"rate", e.rate},
                   {"trace", trace_to_json(e.trace)}});
  }
  doc["episodes"] = eps;
  return doc;
}

std::string EvalReport::curves_csv() const {
  std::ostringstream out;
  out << "policy,recipe,seed,moment,completed,cumulative\n";
  for (const EpisodeRecord& e : episodes) {
    int cumulative = 0;
    for (std::size_t t = 0; t < e.trace.per_step_cpt.size(); ++t) {
      cumulative += e.trace.per_step_cpt[t];
      out << e.policy << ',' << e.recipe << ',' << e.seed << ',' << t << ',' << e.trace.per_step_cpt[t] << ','
          << cumulative << '\n';
    }
  }
  return out.str();
}

std::string EvalReport::swap_table_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "policy,recipe,seed,uav,moment,power,swap,car,prev_pow\n";
  for (const EpisodeRecord& e : episodes) {
    for (std::size_t u = 0; u < e.trace.uav_power.size(); ++u) {
      for (std::size_t t = 0; t < e.trace.uav_power[u].size(); ++t) {
        const Swap* hit = nullptr;
        if (t < e.trace.per_step_swaps.size()) {
          for (const Swap& s : e.trace.per_step_swaps[t]) {
            if (s.uav_id == static_cast<int>(u)) hit = &s;
          }
        }
        out << e.policy << ',' << e.recipe << ',' << e.seed << ',' << u << ',' << t << ','
            << e.trace.uav_power[u][t] << ',' << (hit ? 1 : 0) << ',';
        if (hit) {
          out << hit->car_id << ',' << hit->prev_pow;
        } else {
          out << ',';
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

TrainingJob training_job_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  check_schema_version(doc, "training config");
  TrainingJob job;
  job.description = doc;
  try {
    job.config = TrainConfig::from_json(doc.value("train", Json::object()));
    const std::uint64_t offset = doc.value("scenario_seed_offset", std::uint64_t{1000000});
    const int time_limit = doc.value("time_limit", -1);
    if (doc.contains("recipe") == doc.contains("scenario")) {
      throw Error(ErrorCode::Config, "training config needs exactly one of 'recipe' or 'scenario'");
    }
    if (doc.contains("recipe")) {
      const Json& r = doc.at("recipe");
      ScenarioRecipe recipe = r.is_string() ? load_recipe(base_dir / r.get<std::string>())
                                            : ScenarioRecipe::from_json(r, base_dir);
      if (time_limit >= 0) recipe.time_limit = time_limit;
      job.source = [recipe, offset](std::uint64_t episode) { return generate(recipe, offset + episode); };
    } else {
      Scenario fixed = load_scenario(base_dir / doc.at("scenario").get<std::string>());
      if (time_limit >= 0) fixed.time_limit = time_limit;
      job.source = [fixed](std::uint64_t) { return fixed; };
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("training config: ") + e.what());
  }
  return job;
}

FitResult run_training(const std::filesystem::path& config_path, const std::filesystem::path& out_dir) {
  const TrainingJob job = training_job_from_json(read_json_file(config_path), config_path.parent_path());
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "job.json", job.description.dump(2) + "\n");
  FitOptions options;
  options.run_dir = out_dir;
  return fit(job.config, job.source, options);
}

namespace {

std::vector<Json> read_log(const std::filesystem::path& run_dir) {
  const std::filesystem::path path = run_dir / "log.jsonl";
  std::istringstream in(read_text_file(path));
  std::vector<Json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_json(line, path.string()));
  }
  return rows;
}

}  // namespace

std::string training_report_csv(const std::filesystem::path& run_dir) {
  std::ostringstream out;
  out.precision(9);
  out << "step,loss,epsilon,eval_rate\n";
  for (const Json& row : read_log(run_dir)) {
    out << row.at("step").get<long long>() << ',' << row.at("loss").get<double>() << ','
        << row.at("epsilon").get<double>() << ',';
    if (row.contains("eval_rate")) out << row.at("eval_rate").get<double>();
    out << '\n';
  }
  return out.str();
}

Json training_report_json(const std::filesystem::path& run_dir) {
  const std::vector<Json> rows = read_log(run_dir);
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["run"] = run_dir.string();
  doc["steps"] = rows.size();
  if (std::filesystem::exists(run_dir / "config.json")) doc["config"] = read_json_file(run_dir / "config.json");
  Json evals = Json::array();
  double tail = 0.0;
  const std::size_t window = std::min<std::size_t>(rows.size(), 100);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].contains("eval_rate")) evals.push_back({{"step", rows[i]["step"]}, {"rate", rows[i]["eval_rate"]}});
    if (i + window >= rows.size()) tail += rows[i].at("loss").get<double>();
  }
  doc["final_loss"] = rows.empty() ? Json(nullptr) : rows.back().at("loss");
  doc["mean_loss_last_100"] = window == 0 ? Json(nullptr) : Json(tail / static_cast<double>(window));
  doc["eval_curve"] = evals;
  doc["has_final_checkpoint"] = std::filesystem::exists(run_dir / "final.ckpt");
  return doc;
}

}  // namespace relief
