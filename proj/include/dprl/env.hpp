#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dprl/agent.hpp"
#include "dprl/corruption.hpp"
#include "dprl/reward.hpp"
#include "dprl/sensing.hpp"
#include "dprl/vehicle.hpp"
#include "dprl/world.hpp"

namespace dprl {

/// Everything that defines one navigation task instance, minus the field seed.
struct EnvConfig {
  FieldSpec field{};
  double goal_distance = 65.0;  // radius of the goal circle about the start
  double goal_height = 5.0;
  Eigen::Vector3d start{0.0, 0.0, 5.0};
  double dt = 0.1;
  VehicleLimits limits{};
  EpisodeLimits episode{};
  CameraModel camera{};
  RewardConfig reward{};
  NoiseConfig noise{};
  ActionSpace action_space = ActionSpace::Planar4D;

  void validate() const;
  /// Field spec with the start and goal ring taken from this config.
  FieldSpec effective_field_spec() const;
};

/// One row of an exported trajectory.
struct TrajectoryRow {
  int t = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double d_o = 0.0;
  double reward = 0.0;
  EpisodeEvent outcome = EpisodeEvent::Running;
};

struct StepResult {
  double reward = 0.0;
  EpisodeEvent event = EpisodeEvent::Running;
  double d_o = 0.0;
};

/// Single-vehicle navigation episode over a fixed obstacle field. Produces a
/// privileged and a corrupted observation after every reset and step.
class NavEnv {
 public:
  NavEnv(EnvConfig cfg, ObstacleField field, std::uint64_t seed);
  /// Generates the field from `field_seed`.
  NavEnv(const EnvConfig& cfg, std::uint64_t field_seed, std::uint64_t seed);

  /// Starts an episode toward a goal at a uniformly random bearing.
  void reset();
  /// Starts an episode toward the goal at `bearing` (radians from +x).
  void reset(double bearing);
  /// Applies a normalized action for one control interval.
  StepResult step(const Eigen::VectorXd& normalized_action);

  const Observation& privileged() const { return priv_; }
  const Observation& corrupted() const { return corrupt_; }
  const VehicleState& vehicle() const { return vehicle_; }
  const Eigen::Vector3d& goal() const { return goal_; }
  const ObstacleField& field() const { return field_; }
  const EnvConfig& config() const { return cfg_; }
  int step_index() const { return step_; }
  bool done() const { return done_; }
  double episode_reward() const { return episode_reward_; }
  const std::vector<TrajectoryRow>& trajectory() const { return trajectory_; }

 private:
  void refresh_observations();

  EnvConfig cfg_;
  ObstacleField field_;
  Rng rng_;
  VehicleState vehicle_;
  Eigen::Vector3d goal_ = Eigen::Vector3d::Zero();
  Observation priv_, corrupt_;
  int step_ = 0;
  bool done_ = true;
  double episode_reward_ = 0.0;
  std::vector<TrajectoryRow> trajectory_;
};

}  // namespace dprl
