#include "dprl/env.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dprl {

void EnvConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("environment config: " + m); };
  if (!(goal_distance > 0.0)) fail("goal_distance must be positive");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (episode.max_episode_steps < 1) fail("max_episode_steps must be >= 1");
  if (!(episode.accept_radius > 0.0)) fail("accept_radius must be positive");
  if (!(camera.d_max > 0.0) || !(camera.horizontal_fov > 0.0 && camera.horizontal_fov < std::numbers::pi)) {
    fail("camera needs d_max > 0 and a field of view in (0, pi)");
  }
  if (!in_bounds(field.bounds, start)) fail("start lies outside the bounds");
  const auto& bx = field.bounds;
  if (!bx.x.contains(start.x() - goal_distance) || !bx.x.contains(start.x() + goal_distance) ||
      !bx.y.contains(start.y() - goal_distance) || !bx.y.contains(start.y() + goal_distance) ||
      !bx.z.contains(goal_height)) {
    fail("goal circle leaves the bounds");
  }
  reward.validate();
  noise.validate();
}

FieldSpec EnvConfig::effective_field_spec() const {
  FieldSpec spec = field;
  spec.start_xy = start.head<2>();
  spec.goal_ring_radius = goal_distance;
  return spec;
}

NavEnv::NavEnv(EnvConfig cfg, ObstacleField field, std::uint64_t seed)
    : cfg_(std::move(cfg)), field_(std::move(field)), rng_(seed) {
  cfg_.validate();
}

NavEnv::NavEnv(const EnvConfig& cfg, std::uint64_t field_seed, std::uint64_t seed)
    : NavEnv(cfg, generate_field(field_seed, cfg.effective_field_spec()), seed) {}

void NavEnv::reset() {
  std::uniform_real_distribution<double> bearing(-std::numbers::pi, std::numbers::pi);
  reset(bearing(rng_));
}

void NavEnv::reset(double bearing) {
  goal_ = {cfg_.start.x() + cfg_.goal_distance * std::cos(bearing),
           cfg_.start.y() + cfg_.goal_distance * std::sin(bearing), cfg_.goal_height};
  vehicle_ = VehicleState{};
  vehicle_.position = cfg_.start;
  vehicle_.yaw = wrap_angle(bearing);  // camera faces the goal at spawn
  step_ = 0;
  done_ = false;
  episode_reward_ = 0.0;
  refresh_observations();
  trajectory_.clear();
  trajectory_.push_back({0, vehicle_.position, vehicle_.yaw,
                         distance_to_nearest_obstacle(field_, vehicle_.position, cfg_.episode.sensing_cap),
                         0.0, EpisodeEvent::Running});
}

void NavEnv::refresh_observations() {
  priv_ = observe(field_, vehicle_, goal_, cfg_.camera);
  corrupt_ = corrupt(priv_, cfg_.noise, rng_);
}

StepResult NavEnv::step(const Eigen::VectorXd& normalized_action) {
  if (done_) throw std::logic_error("step() on a finished episode; call reset()");
  if (normalized_action.size() != action_dim(cfg_.action_space) || !normalized_action.allFinite()) {
    throw InvalidAction("action has the wrong size or non-finite entries");
  }
  const double d_prev = (goal_ - vehicle_.position).norm();
  const Action cmd = to_physical(normalized_action, cfg_.action_space, vehicle_.yaw, cfg_.limits);
  vehicle_ = apply_action(vehicle_, cmd, cfg_.dt, cfg_.limits);
  ++step_;

  StepResult r;
  r.d_o = distance_to_nearest_obstacle(field_, vehicle_.position, cfg_.episode.sensing_cap);
  r.event = classify(vehicle_, field_, goal_, step_, cfg_.episode);
  RewardContext ctx;
  ctx.d_t = (goal_ - vehicle_.position).norm();
  ctx.d_prev = d_prev;
  ctx.d_g = (goal_ - cfg_.start).norm();
  ctx.d_l = distance_to_line_xy(vehicle_.position, cfg_.start, goal_);
  ctx.z = vehicle_.position.z();
  ctx.z_goal = goal_.z();
  ctx.d_o = r.d_o;
  r.reward = step_reward(ctx, cfg_.reward) + terminal_reward(r.event, cfg_.reward);
  episode_reward_ += r.reward;
  done_ = is_terminal(r.event);
  refresh_observations();
  trajectory_.push_back({step_, vehicle_.position, vehicle_.yaw, r.d_o, r.reward, r.event});
  return r;
}

}  // namespace dprl
