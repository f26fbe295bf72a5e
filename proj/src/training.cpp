#include "relief/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "relief/error.hpp"

namespace relief {

const char* algorithm_name(Algorithm a) noexcept { return a == Algorithm::Dnn ? "dnn" : "rl"; }

const char* reward_mode_name(RewardMode m) noexcept {
  return m == RewardMode::TaskOnly ? "task_only" : "task_plus_mitig";
}

double epsilon_at(std::int64_t step, const EpsilonSchedule& schedule) {
  if (step < 0) throw Error(ErrorCode::InvalidArgument, "epsilon_at: negative step");
  if (step >= schedule.decay_steps) return schedule.end;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.decay_steps);
  return schedule.start + (schedule.end - schedule.start) * frac;
}

RewardMode TrainConfig::effective_reward_mode() const noexcept {
  if (reward_mode) return *reward_mode;
  return algorithm == Algorithm::Rl ? RewardMode::TaskOnly : RewardMode::TaskPlusMitig;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Config, "train config: " + what); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0,1)");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (target_period <= 0) fail("target_period must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (replay_capacity < batch_size) fail("replay_capacity must be at least batch_size");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0)) {
    fail("epsilon bounds must lie in [0,1]");
  }
  if (epsilon.decay_steps < 0) fail("epsilon decay_steps must be nonnegative");
  if (max_steps < 0) fail("max_steps must be nonnegative");
  if (embed_dim <= 0 || hidden_mult <= 0) fail("embed_dim and hidden_mult must be positive");
  if (eval_every < 0 || eval_episodes <= 0 || checkpoint_every < 0) fail("evaluation/checkpoint cadence");
  if (!(rmsprop.rho > 0.0 && rmsprop.rho < 1.0) || !(rmsprop.epsilon > 0.0)) fail("rmsprop options");
}

Json TrainConfig::to_json() const {
  Json doc{{"algorithm", algorithm_name(algorithm)},
           {"reward_mode", reward_mode_name(effective_reward_mode())},
           {"use_cnn", use_cnn},
           {"gamma", gamma},
           {"lr", lr},
           {"target_period", target_period},
           {"replay_capacity", replay_capacity},
           {"batch_size", batch_size},
           {"epsilon", {{"start", epsilon.start}, {"end", epsilon.end}, {"decay_steps", epsilon.decay_steps}}},
           {"max_steps", max_steps},
           {"seed", seed},
           {"embed_dim", embed_dim},
           {"hidden_mult", hidden_mult},
           {"rmsprop", {{"rho", rmsprop.rho}, {"epsilon", rmsprop.epsilon}}},
           {"eval_every", eval_every},
           {"eval_episodes", eval_episodes},
           {"checkpoint_every", checkpoint_every}};
  return doc;
}

TrainConfig TrainConfig::from_json(const Json& doc) {
  static const std::vector<std::string> known{
      "algorithm",  "reward_mode", "use_cnn",   "gamma",       "lr",         "target_period",
      "replay_capacity", "batch_size", "epsilon", "max_steps", "seed",       "embed_dim",
      "hidden_mult", "rmsprop",    "eval_every", "eval_episodes", "checkpoint_every"};
  if (!doc.is_object()) throw Error(ErrorCode::Config, "train config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::Config, "train config: unknown key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    if (doc.contains("algorithm")) {
      const auto a = doc.at("algorithm").get<std::string>();
      if (a == "rl") {
        c.algorithm = Algorithm::Rl;
      } else if (a == "dnn") {
        c.algorithm = Algorithm::Dnn;
      } else {
        throw Error(ErrorCode::Config, "train config: algorithm must be 'rl' or 'dnn'");
      }
    }
    if (doc.contains("reward_mode")) {
      const auto m = doc.at("reward_mode").get<std::string>();
      if (m == "task_only") {
        c.reward_mode = RewardMode::TaskOnly;
      } else if (m == "task_plus_mitig") {
        c.reward_mode = RewardMode::TaskPlusMitig;
      } else {
        throw Error(ErrorCode::Config, "train config: reward_mode must be 'task_only' or 'task_plus_mitig'");
      }
    }
    c.use_cnn = doc.value("use_cnn", c.use_cnn);
    c.gamma = doc.value("gamma", c.gamma);
    c.lr = doc.value("lr", c.lr);
    c.target_period = doc.value("target_period", c.target_period);
    c.replay_capacity = doc.value("replay_capacity", c.replay_capacity);
    c.batch_size = doc.value("batch_size", c.batch_size);
    if (doc.contains("epsilon")) {
      const Json& e = doc.at("epsilon");
      c.epsilon.start = e.value("start", c.epsilon.start);
      c.epsilon.end = e.value("end", c.epsilon.end);
      c.epsilon.decay_steps = e.value("decay_steps", c.epsilon.decay_steps);
    }
    c.max_steps = doc.value("max_steps", c.max_steps);
    c.seed = doc.value("seed", c.seed);
    c.embed_dim = doc.value("embed_dim", c.embed_dim);
    c.hidden_mult = doc.value("hidden_mult", c.hidden_mult);
    if (doc.contains("rmsprop")) {
      c.rmsprop.rho = doc.at("rmsprop").value("rho", c.rmsprop.rho);
      c.rmsprop.epsilon = doc.at("rmsprop").value("epsilon", c.rmsprop.epsilon);
    }
    c.eval_every = doc.value("eval_every", c.eval_every);
    c.eval_episodes = doc.value("eval_episodes", c.eval_episodes);
    c.checkpoint_every = doc.value("checkpoint_every", c.checkpoint_every);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double reward(const StepOutcome& outcome, RewardMode mode) {
  const double r = static_cast<double>(outcome.task_cpt);
  return mode == RewardMode::TaskOnly ? r : r + outcome.mitig_sum;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::InvalidArgument, "replay capacity must be positive");
  records_.reserve(capacity);
}

void ReplayBuffer::push(TransitionRecord record) {
  if (records_.size() < capacity_) {
    records_.push_back(std::move(record));
  } else {
    records_[next_] = std::move(record);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const TransitionRecord*> ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (records_.empty()) throw Error(ErrorCode::Precondition, "cannot sample an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, records_.size() - 1);
  std::vector<const TransitionRecord*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&records_[pick(rng)]);
  return out;
}

std::vector<CellIndex> select_actions(const nn::Matrix<float>& q, std::span<const std::vector<CellIndex>> masks,
                                      double epsilon, std::mt19937_64& rng) {
  if (static_cast<std::size_t>(q.rows()) != masks.size()) {
    throw Error(ErrorCode::Dimension, "select_actions: one Q row per mask expected");
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<CellIndex> joint;
  joint.reserve(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& mask = masks[i];
    if (mask.empty()) throw Error(ErrorCode::InvalidArgument, "select_actions: empty mask");
    if (epsilon > 0.0 && coin(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, mask.size() - 1);
      joint.push_back(mask[pick(rng)]);
    } else {
      joint.push_back(masked_argmax(q.row(static_cast<Eigen::Index>(i)), mask));
    }
  }
  return joint;
}

nn::Matrix<float> agent_q_values(const nn::ParameterSet<float>& params, const ManfTopology& topo,
                                 const ObservationBundle& bundle) {
  const std::vector<float> channels = bundle.channels.flatten();
  const EmbedPass<float> ep = embed_forward<float>(params, topo, channels, 1);
  return agent_forward<float>(params, topo, ep.embedding, bundle.locals).q;
}

namespace {

void check_scenario_fits(const Scenario& scenario, const ManfTopology& topo) {
  if (scenario.world.height() != topo.height || scenario.world.width() != topo.width ||
      static_cast<int>(scenario.agents.size()) != topo.agent_count) {
    throw Error(ErrorCode::Config, "scenario is " + std::to_string(scenario.world.height()) + "x" +
                                       std::to_string(scenario.world.width()) + " with " +
                                       std::to_string(scenario.agents.size()) + " agents; network expects " +
                                       std::to_string(topo.height) + "x" + std::to_string(topo.width) + " with " +
                                       std::to_string(topo.agent_count));
  }
}

// Steps an episode while recording replay transitions.
class Collector {
 public:
  explicit Collector(const Scenario& scenario)
      : episode_(scenario), bundle_(build_bundle(episode_.world(), episode_.agents())) {}

  bool done() const noexcept { return episode_.done(); }
  const Episode& episode() const noexcept { return episode_; }

  TransitionRecord advance(const nn::ParameterSet<float>& params, const ManfTopology& topo, RewardMode mode,
                           double epsilon, std::mt19937_64& rng) {
    const nn::Matrix<float> q = agent_q_values(params, topo, bundle_);
    TransitionRecord rec;
    rec.joint_action = select_actions(q, bundle_.masks, epsilon, rng);
    const StepOutcome out = episode_.advance(rec.joint_action);
    ObservationBundle next = build_bundle(episode_.world(), episode_.agents());
    rec.channels = bundle_.channels.flatten();
    rec.next_channels = next.channels.flatten();
    rec.locals = std::move(bundle_.locals);
    rec.next_locals = next.locals;
    rec.next_masks = next.masks;
    rec.reward = reward(out, mode);
    rec.terminal_factor = episode_.done() ? 0 : 1;
    bundle_ = std::move(next);
    return rec;
  }

 private:
  Episode episode_;
  ObservationBundle bundle_;
};

void check_finite(double loss) {
  if (!std::isfinite(loss)) throw Error(ErrorCode::Numeric, "training loss is not finite (" + std::to_string(loss) + ")");
}

std::vector<CellIndex> chosen_actions(std::span<const TransitionRecord* const> batch) {
  std::vector<CellIndex> chosen;
  for (const TransitionRecord* r : batch) chosen.insert(chosen.end(), r->joint_action.begin(), r->joint_action.end());
  return chosen;
}

double regress(std::span<const TransitionRecord* const> batch, PolicyCheckpoint& checkpoint,
               const TrainConfig& config, const std::vector<double>& targets) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "training batch is empty");
  const ManfBatch<float> mb = make_batch(batch, false);
  const std::vector<float> y(targets.begin(), targets.end());
  const auto chosen = chosen_actions(batch);
  ManfLoss<float> result = manf_loss<float>(checkpoint.eval, checkpoint.topology, mb, chosen, y, true);
  check_finite(result.loss);
  nn::rmsprop_step(checkpoint.eval, result.grads, config.lr, config.rmsprop);
  ++checkpoint.step;
  return result.loss;
}

}  // namespace

ManfBatch<float> make_batch(std::span<const TransitionRecord* const> batch, bool next_state) {
  ManfBatch<float> mb;
  mb.size = static_cast<int>(batch.size());
  for (const TransitionRecord* r : batch) {
    const auto& ch = next_state ? r->next_channels : r->channels;
    const auto& lo = next_state ? r->next_locals : r->locals;
    mb.channels.insert(mb.channels.end(), ch.begin(), ch.end());
    mb.locals.insert(mb.locals.end(), lo.begin(), lo.end());
  }
  return mb;
}

CollectedEpisode collect_episode(const Scenario& scenario, const PolicyCheckpoint& checkpoint,
                                 const TrainConfig& config, double epsilon, std::mt19937_64& rng) {
  check_scenario_fits(scenario, checkpoint.topology);
  CollectedEpisode out;
  Collector collector(scenario);
  while (!collector.done()) {
    out.transitions.push_back(
        collector.advance(checkpoint.eval, checkpoint.topology, config.effective_reward_mode(), epsilon, rng));
  }
  out.trace = collector.episode().trace();
  return out;
}

std::vector<double> td_targets(std::span<const TransitionRecord* const> batch, const PolicyCheckpoint& checkpoint,
                               double gamma) {
  const ManfTopology& topo = checkpoint.topology;
  const int n = topo.agent_count;
  const ManfBatch<float> next = make_batch(batch, true);
  const EmbedPass<float> ep = embed_forward<float>(checkpoint.target, topo, next.channels, next.size);
  const AgentPass<float> ap = agent_forward<float>(checkpoint.target, topo, ep.embedding, next.locals);
  nn::Matrix<float> best(next.size, n);
  for (int b = 0; b < next.size; ++b) {
    const TransitionRecord& r = *batch[static_cast<std::size_t>(b)];
    for (int i = 0; i < n; ++i) {
      best(b, i) = static_cast<float>(masked_max(ap.q.row(b * n + i), r.next_masks.at(static_cast<std::size_t>(i))));
    }
  }
  const MixPass<float> mp = mix_forward<float>(checkpoint.target, topo, ep.embedding, best);
  std::vector<double> y;
  y.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TransitionRecord& r = *batch[b];
    y.push_back(r.terminal_factor == 0 ? r.reward : r.reward + gamma * static_cast<double>(mp.q_tot[b]));
  }
  return y;
}

double train_step_dnn(std::span<const TransitionRecord* const> batch, PolicyCheckpoint& checkpoint,
                      const TrainConfig& config) {
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const TransitionRecord* r : batch) targets.push_back(r->reward);
  return regress(batch, checkpoint, config, targets);
}

double train_step_rl(std::span<const TransitionRecord* const> batch, PolicyCheckpoint& checkpoint,
                     const TrainConfig& config) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "training batch is empty");
  const double loss = regress(batch, checkpoint, config, td_targets(batch, checkpoint, config.gamma));
  if (checkpoint.step % config.target_period == 0) checkpoint.sync_targets();
  return loss;
}

LearnedPolicy::LearnedPolicy(PolicyCheckpoint checkpoint, std::string label)
    : checkpoint_(std::move(checkpoint)), label_(std::move(label)) {}

std::vector<CellIndex> LearnedPolicy::act(const GridWorld& world, std::span<const AgentState> agents,
                                          std::mt19937_64& rng) const {
  const ObservationBundle bundle = build_bundle(world, agents);
  return select_actions(agent_q_values(checkpoint_.eval, checkpoint_.topology, bundle), bundle.masks, 0.0, rng);
}

void LearnedPolicy::check_compatible(const Scenario& scenario) const {
  check_scenario_fits(scenario, checkpoint_.topology);
}

Json TrainLogEntry::to_json() const {
  Json doc{{"step", step}, {"loss", loss}, {"epsilon", epsilon}};
  if (eval_rate) doc["eval_rate"] = *eval_rate;
  return doc;
}

namespace {

constexpr std::uint64_t kEvalSeedBase = 1ULL << 40;

double evaluate_rate(const PolicyCheckpoint& checkpoint, const ScenarioSource& source, int episodes) {
  const LearnedPolicy policy(checkpoint);
  double sum = 0.0;
  int counted = 0;
  for (int k = 0; k < episodes; ++k) {
    const Scenario s = source(kEvalSeedBase + static_cast<std::uint64_t>(k));
    if (s.world.initial_task_count() == 0) continue;
    const EpisodeTrace trace = run_episode(s, policy, static_cast<std::uint64_t>(k));
    sum += static_cast<double>(trace.completed()) / static_cast<double>(trace.initial_task_count);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / counted;
}

}  // namespace

FitResult fit(const TrainConfig& config, const ScenarioSource& source, const FitOptions& options) {
  config.validate();
  const Scenario first = source(0);
  ManfTopology topo;
  topo.height = first.world.height();
  topo.width = first.world.width();
  topo.agent_count = static_cast<int>(first.agents.size());
  topo.embed_dim = config.embed_dim;
  topo.hidden_mult = config.hidden_mult;
  topo.use_cnn = config.use_cnn;

  FitResult result;
  result.checkpoint = PolicyCheckpoint::create(topo, config.seed);
  result.checkpoint.extra = {{"train_config", config.to_json()}};
  PolicyCheckpoint& ck = result.checkpoint;
  const ScenarioSource& eval_source = options.eval_source ? options.eval_source : source;

  std::ofstream log_file;
  if (!options.run_dir.empty()) {
    std::filesystem::create_directories(options.run_dir / "checkpoints");
    write_text_file(options.run_dir / "config.json", config.to_json().dump(2) + "\n");
    log_file.open(options.run_dir / "log.jsonl");
    if (!log_file) throw Error(ErrorCode::Io, "cannot write " + (options.run_dir / "log.jsonl").string());
  }

  std::mt19937_64 act_rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::mt19937_64 sample_rng(config.seed * 0xBF58476D1CE4E5B9ULL + 2);
  ReplayBuffer replay(static_cast<std::size_t>(config.replay_capacity));
  const RewardMode mode = config.effective_reward_mode();

  std::uint64_t episode_index = 0;
  while (ck.step < config.max_steps) {
    const Scenario scenario = episode_index == 0 ? first : source(episode_index);
    ++episode_index;
    check_scenario_fits(scenario, topo);
    if (scenario.time_limit <= 0) throw Error(ErrorCode::Config, "training scenarios need a positive time limit");
    Collector collector(scenario);
    while (!collector.done() && ck.step < config.max_steps) {
      const double eps = epsilon_at(ck.step, config.epsilon);
      replay.push(collector.advance(ck.eval, topo, mode, eps, act_rng));
      if (replay.size() < static_cast<std::size_t>(config.batch_size)) continue;

      const auto batch = replay.sample(static_cast<std::size_t>(config.batch_size), sample_rng);
      TrainLogEntry entry;
      entry.epsilon = eps;
      entry.loss = config.algorithm == Algorithm::Rl ? train_step_rl(batch, ck, config)
                                                      : train_step_dnn(batch, ck, config);
      entry.step = ck.step;
      if (config.eval_every > 0 && ck.step % config.eval_every == 0) {
        entry.eval_rate = evaluate_rate(ck, eval_source, config.eval_episodes);
      }
      if (log_file.is_open()) log_file << entry.to_json().dump() << '\n';
      if (!options.run_dir.empty() && config.checkpoint_every > 0 && ck.step % config.checkpoint_every == 0) {
        ck.save(options.run_dir / "checkpoints" / ("step_" + std::to_string(ck.step) + ".ckpt"));
      }
      result.log.push_back(entry);
    }
  }
  result.episodes = static_cast<std::int64_t>(episode_index);
  if (!options.run_dir.empty()) ck.save(options.run_dir / "final.ckpt");
  return result;
}

}  // namespace relief
