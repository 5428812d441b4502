#include "dprl/reward.hpp"

#include <algorithm>
#include <cmath>

namespace dprl {

void RewardConfig::validate() const {
  if (!(crash_distance > 0.0 && safe_distance > crash_distance)) {
    throw std::invalid_argument("reward distances must satisfy safe > crash > 0");
  }
  if (eta_r < 0.0 || eta_p < 0.0 || eta_o < 0.0) {
    throw std::invalid_argument("reward scales must be non-negative");
  }
}

double progress_term(const RewardContext& ctx) {
  if (!(ctx.d_g > 0.0)) throw InvalidRewardContext("start-to-goal distance must be positive");
  return (ctx.d_prev - ctx.d_t) / ctx.d_g;
}

double path_penalty(const RewardContext& ctx) {
  return std::abs(std::clamp(ctx.d_l / 10.0, 0.0, 1.0)) +
         2.0 * std::abs(std::clamp((ctx.z - ctx.z_goal) / 5.0, -1.0, 1.0));
}

double proximity_penalty(const RewardContext& ctx, const RewardConfig& cfg) {
  if (ctx.d_o >= cfg.safe_distance) return 0.0;
  return 1.0 - std::clamp((ctx.d_o - cfg.crash_distance) /
                              (cfg.safe_distance - cfg.crash_distance),
                          0.0, 1.0);
}

double step_reward(const RewardContext& ctx, const RewardConfig& cfg) {
  const double raw = cfg.eta_r * progress_term(ctx) - cfg.eta_p * path_penalty(ctx) -
                     cfg.eta_o * proximity_penalty(ctx, cfg);
  return std::clamp(raw, -1.0, 1.0);
}

double terminal_reward(EpisodeEvent event, const RewardConfig& cfg) {
  switch (event) {
    case EpisodeEvent::Goal: return cfg.goal_reward;
    case EpisodeEvent::Collision: return cfg.crash_penalty;
    case EpisodeEvent::OutOfBounds: return cfg.oob_penalty;
    case EpisodeEvent::Timeout:
    case EpisodeEvent::Running: return 0.0;
  }
  return 0.0;
}

double distance_to_line_xy(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& b) {
  const Eigen::Vector2d ab = b.head<2>() - a.head<2>();
  const Eigen::Vector2d ap = p.head<2>() - a.head<2>();
  const double len = ab.norm();
  if (len == 0.0) return ap.norm();
  return std::abs(ab.x() * ap.y() - ab.y() * ap.x()) / len;
}

}  // namespace dprl
