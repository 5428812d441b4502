#pragma once

#include <stdexcept>
#include <string_view>

#include <Eigen/Core>

#include "dprl/world.hpp"

namespace dprl {

struct VehicleState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

/// World-frame velocity command plus yaw-rate command. Stored unclamped.
struct Action {
  Eigen::Vector3d v_cmd = Eigen::Vector3d::Zero();
  double yaw_rate_cmd = 0.0;
};

struct VehicleLimits {
  double vx_max = 3.0;
  double vy_max = 3.0;
  double vz_max = 2.0;
  double yaw_rate_max = 0.3;
};

enum class EpisodeEvent { Running, Goal, Collision, OutOfBounds, Timeout };

std::string_view to_string(EpisodeEvent e);
bool is_terminal(EpisodeEvent e);

/// Thresholds used by classify().
struct EpisodeLimits {
  double accept_radius = 2.0;
  double crash_distance = 1.0;
  int max_episode_steps = 500;
  double sensing_cap = 20.0;
};

class InvalidAction : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

Action clamp_action(const Action& a, const VehicleLimits& limits);

/// First-order kinematics: the clamped command is realized for the whole interval.
VehicleState apply_action(const VehicleState& state, const Action& a, double dt,
                          const VehicleLimits& limits = {});

/// Planar speed along the current heading (the 3-D action-space variant) to a world-frame action.
Action heading_command_to_world(double forward_speed, double vz, double yaw_rate, double yaw);

/// Outcome of the step that produced `state`. Precedence: Goal, Collision, OutOfBounds, Timeout.
EpisodeEvent classify(const VehicleState& state, const ObstacleField& field,
                      const Eigen::Vector3d& goal, int step_index,
                      const EpisodeLimits& limits = {});

}  // namespace dprl
