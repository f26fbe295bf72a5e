#ifndef RELIEF_TRAINING_HPP_
#define RELIEF_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relief/baselines.hpp"
#include "relief/manf.hpp"

namespace relief {

enum class Algorithm { Dnn, Rl };
enum class RewardMode { TaskOnly, TaskPlusMitig };

const char* algorithm_name(Algorithm a) noexcept;
const char* reward_mode_name(RewardMode m) noexcept;

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.1;
  std::int64_t decay_steps = 1024;
};

// Linear from start to end over decay_steps trainer steps, then flat.
double epsilon_at(std::int64_t step, const EpsilonSchedule& schedule);

struct TrainConfig {
  Algorithm algorithm = Algorithm::Rl;
  // Unset: task_only for rl, task_plus_mitig for dnn.
  std::optional<RewardMode> reward_mode;
  bool use_cnn = true;
  double gamma = 0.7;
  double lr = 1e-4;
  int target_period = 200;
  int replay_capacity = 5000;
  int batch_size = 32;
  EpsilonSchedule epsilon;
  std::int64_t max_steps = 20000;
  std::uint64_t seed = 0;
  int embed_dim = 32;
  int hidden_mult = 10;
  nn::RmsPropOptions rmsprop;

  // Greedy evaluation on eval_episodes scenarios every eval_every steps; 0 disables.
  std::int64_t eval_every = 0;
  int eval_episodes = 5;
  // Periodic checkpoints in the run directory; 0 keeps only the final one.
  std::int64_t checkpoint_every = 0;

  RewardMode effective_reward_mode() const noexcept;
  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& doc);
};

double reward(const StepOutcome& outcome, RewardMode mode);

/// One replay entry. Channels are stored raw (channel-major floats) so the
/// conv extractor is re-run, and trained, on every replayed sample.
struct TransitionRecord {
  std::vector<float> channels;
  std::vector<float> next_channels;
  std::vector<LocalFeatures> locals;
  std::vector<LocalFeatures> next_locals;
  std::vector<std::vector<CellIndex>> next_masks;
  std::vector<CellIndex> joint_action;
  double reward = 0.0;
  int terminal_factor = 1;  // 0 on the final transition of an episode
};

/// Fixed-capacity ring buffer; the oldest entry is overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(TransitionRecord record);
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const TransitionRecord& operator[](std::size_t i) const { return records_.at(i); }

  // Uniform draws with replacement.
  std::vector<const TransitionRecord*> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<TransitionRecord> records_;
};

// Per agent: with probability epsilon a uniform draw from the mask,
// otherwise the masked argmax. q is agents x cells.
std::vector<CellIndex> select_actions(const nn::Matrix<float>& q, std::span<const std::vector<CellIndex>> masks,
                                      double epsilon, std::mt19937_64& rng);

// Q values of every agent for one state, agents x cells.
nn::Matrix<float> agent_q_values(const nn::ParameterSet<float>& params, const ManfTopology& topo,
                                 const ObservationBundle& bundle);

struct CollectedEpisode {
  std::vector<TransitionRecord> transitions;
  EpisodeTrace trace;
};

// One transition per step, time_limit in total; the final one has te = 0.
CollectedEpisode collect_episode(const Scenario& scenario, const PolicyCheckpoint& checkpoint,
                                 const TrainConfig& config, double epsilon, std::mt19937_64& rng);

// Regression of the mixed Q on the immediate reward. Returns the batch loss
// before the update.
double train_step_dnn(std::span<const TransitionRecord* const> batch, PolicyCheckpoint& checkpoint,
                      const TrainConfig& config);

// TD regression on r + gamma * te * target_mix(masked max of target Q).
// Targets are re-synced every target_period steps.
double train_step_rl(std::span<const TransitionRecord* const> batch, PolicyCheckpoint& checkpoint,
                     const TrainConfig& config);

// Bootstrapped targets used by train_step_rl, exposed for inspection.
std::vector<double> td_targets(std::span<const TransitionRecord* const> batch, const PolicyCheckpoint& checkpoint,
                               double gamma);

ManfBatch<float> make_batch(std::span<const TransitionRecord* const> batch, bool next_state);

/// Greedy (epsilon = 0) decisions from a checkpoint's eval networks.
class LearnedPolicy final : public Policy {
 public:
  explicit LearnedPolicy(PolicyCheckpoint checkpoint, std::string label = "manf");

  std::string name() const override { return label_; }
  std::vector<CellIndex> act(const GridWorld& world, std::span<const AgentState> agents,
                             std::mt19937_64& rng) const override;
  void check_compatible(const Scenario& scenario) const override;

  const PolicyCheckpoint& checkpoint() const noexcept { return checkpoint_; }

 private:
  PolicyCheckpoint checkpoint_;
  std::string label_;
};

struct TrainLogEntry {
  std::int64_t step = 0;
  double loss = 0.0;
  double epsilon = 0.0;
  std::optional<double> eval_rate;

  Json to_json() const;
};

struct FitResult {
  PolicyCheckpoint checkpoint;
  std::vector<TrainLogEntry> log;
  std::int64_t episodes = 0;
};

// Scenario for the n-th training episode.
using ScenarioSource = std::function<Scenario(std::uint64_t episode)>;

struct FitOptions {
  // Scenarios for periodic evaluation; defaults to the training source.
  ScenarioSource eval_source;
  // When set, config.json, log.jsonl, checkpoints/ and final.ckpt go here.
  std::filesystem::path run_dir;
};

FitResult fit(const TrainConfig& config, const ScenarioSource& source, const FitOptions& options = {});

}  // namespace relief

#endif  // RELIEF_TRAINING_HPP_
