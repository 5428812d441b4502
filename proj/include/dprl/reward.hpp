#pragma once

#include <stdexcept>

#include "dprl/vehicle.hpp"

namespace dprl {

struct RewardConfig {
  double eta_r = 5.0;
  double eta_p = 0.5;
  double eta_o = 1.0;
  double crash_distance = 1.0;  // d_c
  double safe_distance = 4.0;   // d_s
  double goal_reward = 10.0;
  double crash_penalty = -5.0;
  double oob_penalty = -5.0;

  void validate() const;
};

/// Per-step geometric quantities feeding the continuous reward.
struct RewardContext {
  double d_t = 0.0;       // current distance to goal
  double d_prev = 0.0;    // previous distance to goal
  double d_g = 1.0;       // start-to-goal distance
  double d_l = 0.0;       // distance to the start-goal line
  double z = 0.0;
  double z_goal = 0.0;
  double d_o = 0.0;       // distance to the nearest obstacle surface
};

class InvalidRewardContext : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double progress_term(const RewardContext& ctx);
double path_penalty(const RewardContext& ctx);
double proximity_penalty(const RewardContext& ctx, const RewardConfig& cfg);

/// Continuous reward, clipped to [-1, 1].
double step_reward(const RewardContext& ctx, const RewardConfig& cfg);

/// Sparse reward for the step that ended the episode; 0 for Running and Timeout.
double terminal_reward(EpisodeEvent event, const RewardConfig& cfg);

/// Horizontal distance from p to the infinite line through a and b.
double distance_to_line_xy(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& b);

}  // namespace dprl
