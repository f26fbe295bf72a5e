#ifndef RELIEF_OBSERVATION_HPP_
#define RELIEF_OBSERVATION_HPP_

#include <array>
#include <span>
#include <vector>

#include "relief/gridworld.hpp"
#include "relief/io.hpp"

namespace relief {

inline constexpr int kChannelCount = 5;

// Battery-swap urgency: exp(-floor(pow/csp)) for UAVs, 0 otherwise.
double urgency(double pow, double csp, AgentKind kind);

/// The five global grids, each height*width and row-major. Channel order is
/// obstacles, tasks, urgency, workers, cars.
struct GlobalChannels {
  int height = 0;
  int width = 0;
  std::vector<double> obst_dist;
  std::vector<double> task_dist;
  std::vector<double> urge_dist;
  std::vector<double> work_dist;
  std::vector<double> car_dist;

  std::array<const std::vector<double>*, kChannelCount> ordered() const {
    return {&obst_dist, &task_dist, &urge_dist, &work_dist, &car_dist};
  }
  // Channel-major flattening used as network input.
  std::vector<float> flatten() const;

  bool operator==(const GlobalChannels&) const = default;
};

/// Compact local observation. The one-hot encodings are materialized on
/// demand; loc and agent_id are the positions of their single 1.
struct LocalFeatures {
  CellIndex loc = 0;
  int agent_id = 0;
  int cell_count = 0;
  int agent_count = 0;
  double urge = 0.0;

  std::vector<double> loc_onehot() const;
  std::vector<double> agent_id_onehot() const;

  bool operator==(const LocalFeatures&) const = default;
};

struct ObservationBundle {
  GlobalChannels channels;
  std::vector<LocalFeatures> locals;
  std::vector<std::vector<CellIndex>> masks;

  bool operator==(const ObservationBundle&) const = default;
};

GlobalChannels build_global(const GridWorld& world, std::span<const AgentState> agents);
std::vector<LocalFeatures> build_locals(const GridWorld& world, std::span<const AgentState> agents);
ObservationBundle build_bundle(const GridWorld& world, std::span<const AgentState> agents);

Json bundle_to_json(const ObservationBundle& bundle);
ObservationBundle bundle_from_json(const Json& doc);

}  // namespace relief

#endif  // RELIEF_OBSERVATION_HPP_
