#include "dprl/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dprl {

std::string_view to_string(EpisodeEvent e) {
  switch (e) {
    case EpisodeEvent::Running: return "running";
    case EpisodeEvent::Goal: return "goal";
    case EpisodeEvent::Collision: return "collision";
    case EpisodeEvent::OutOfBounds: return "out_of_bounds";
    case EpisodeEvent::Timeout: return "timeout";
  }
  return "unknown";
}

bool is_terminal(EpisodeEvent e) { return e != EpisodeEvent::Running; }

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

Action clamp_action(const Action& a, const VehicleLimits& limits) {
  Action out;
  out.v_cmd.x() = std::clamp(a.v_cmd.x(), -limits.vx_max, limits.vx_max);
  out.v_cmd.y() = std::clamp(a.v_cmd.y(), -limits.vy_max, limits.vy_max);
  out.v_cmd.z() = std::clamp(a.v_cmd.z(), -limits.vz_max, limits.vz_max);
  out.yaw_rate_cmd = std::clamp(a.yaw_rate_cmd, -limits.yaw_rate_max, limits.yaw_rate_max);
  return out;
}

VehicleState apply_action(const VehicleState& state, const Action& a, double dt,
                          const VehicleLimits& limits) {
  if (!(dt > 0.0)) throw InvalidAction("control interval must be positive");
  if (!a.v_cmd.allFinite() || !std::isfinite(a.yaw_rate_cmd)) {
    throw InvalidAction("non-finite action component");
  }
  const Action c = clamp_action(a, limits);
  VehicleState next;
  next.position = state.position + c.v_cmd * dt;
  next.velocity = c.v_cmd;
  next.yaw = wrap_angle(state.yaw + c.yaw_rate_cmd * dt);
  next.yaw_rate = c.yaw_rate_cmd;
  return next;
}

Action heading_command_to_world(double forward_speed, double vz, double yaw_rate, double yaw) {
  Action a;
  a.v_cmd = {forward_speed * std::cos(yaw), forward_speed * std::sin(yaw), vz};
  a.yaw_rate_cmd = yaw_rate;
  return a;
}

EpisodeEvent classify(const VehicleState& state, const ObstacleField& field,
                      const Eigen::Vector3d& goal, int step_index, const EpisodeLimits& limits) {
  if ((state.position - goal).norm() <= limits.accept_radius) return EpisodeEvent::Goal;
  if (distance_to_nearest_obstacle(field, state.position, limits.sensing_cap) <
      limits.crash_distance) {
    return EpisodeEvent::Collision;
  }
  if (!in_bounds(field.bounds, state.position)) return EpisodeEvent::OutOfBounds;
  if (step_index >= limits.max_episode_steps) return EpisodeEvent::Timeout;
  return EpisodeEvent::Running;
}

}  // namespace dprl
