#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relief/relief_swarm.h"

namespace {

int report_failure(rs_status status) {
  std::cerr << "relief-swarm: error " << static_cast<int>(status) << ": " << rs_last_error() << "\n";
  return 1;
}

int print_owned(rs_status status, char* text) {
  if (status != RS_OK) return report_failure(status);
  std::cout << text;
  if (text[0] != '\0' && text[std::char_traits<char>::length(text) - 1] != '\n') std::cout << '\n';
  rs_string_free(text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Route planning workbench for UAVs, workers and cars in a disaster grid"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rs_version()));

  std::string recipe, out, scenario_path, config, run_dir, format = "json";
  std::uint64_t seed = 0;
  std::vector<std::string> policies;
  unsigned seeds = 20;
  int time_limit = 9, horizon = 3, threads = 0;

  auto* gen = app.add_subcommand("gen", "Generate a scenario from a recipe");
  gen->add_option("--recipe", recipe, "Recipe file (JSON)")->required();
  gen->add_option("--seed", seed, "Generation seed")->required();
  gen->add_option("--out", out, "Scenario output file")->required();

  auto* train = app.add_subcommand("train", "Train a policy; writes config, log and checkpoints to a run directory");
  train->add_option("--config", config, "Training config (JSON)")->required();
  train->add_option("--out", out, "Run directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate policies over generated scenarios");
  eval->add_option("--policy", policies, "greedy, random, or a checkpoint path (repeatable)")->required();
  eval->add_option("--recipe", recipe, "Recipe file (JSON)")->required();
  eval->add_option("--seeds", seeds, "Number of evaluation seeds (0..N-1)")->check(CLI::PositiveNumber);
  eval->add_option("--time-limit", time_limit, "Episode time limit")->check(CLI::NonNegativeNumber);
  eval->add_option("--out", out, "Report file (JSON); CSV tables are written next to it")->required();
  eval->add_option("--threads", threads, "Worker threads (0: RELIEF_SWARM_THREADS or all cores)");

  auto* oracle = app.add_subcommand("oracle", "Exhaustively solve a tiny scenario");
  oracle->add_option("--scenario", scenario_path, "Scenario file (JSON)")->required();
  oracle->add_option("--horizon", horizon, "Planning horizon")->required();

  auto* report = app.add_subcommand("report", "Summarize a training run");
  report->add_option("--run", run_dir, "Run directory")->required();
  report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    rs_scenario* s = nullptr;
    rs_status st = rs_scenario_generate(recipe.c_str(), seed, &s);
    if (st == RS_OK) st = rs_scenario_save(s, out.c_str());
    rs_scenario_free(s);
    return st == RS_OK ? 0 : report_failure(st);
  }
  if (train->parsed()) {
    const rs_status st = rs_train(config.c_str(), out.c_str());
    return st == RS_OK ? 0 : report_failure(st);
  }
  if (eval->parsed()) {
    std::vector<const char*> specs;
    for (const auto& p : policies) specs.push_back(p.c_str());
    const rs_status st =
        rs_eval(specs.data(), specs.size(), recipe.c_str(), seeds, time_limit, threads, out.c_str());
    return st == RS_OK ? 0 : report_failure(st);
  }
  if (oracle->parsed()) {
    rs_scenario* s = nullptr;
    rs_status st = rs_scenario_load(scenario_path.c_str(), &s);
    char* text = nullptr;
    if (st == RS_OK) st = rs_oracle(s, horizon, &text);
    rs_scenario_free(s);
    return print_owned(st, text);
  }
  if (report->parsed()) {
    char* text = nullptr;
    return print_owned(rs_report(run_dir.c_str(), format.c_str(), &text), text);
  }
  return 1;
}
