#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dprl/nn/network.hpp"
#include "dprl/nn/param_set.hpp"
#include "dprl/replay.hpp"
#include "dprl/rng.hpp"
#include "dprl/sensing.hpp"
#include "dprl/vehicle.hpp"

namespace dprl {

/// Planar4D: world-frame (vx, vy, vz, yaw rate).
/// Heading3D: (forward speed along the heading, vz, yaw rate) with a reduced self-state.
enum class ActionSpace { Planar4D, Heading3D };

std::string_view to_string(ActionSpace s);
ActionSpace parse_action_space(std::string_view s);

int action_dim(ActionSpace s);
int state_feature_dim(ActionSpace s);

/// Scales that bring self-state components to roughly unit range before they reach a network.
struct FeatureScales {
  double distance = 65.0;  // goal distance
  VehicleLimits limits{};
};

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  int policy_delay = 2;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  double exploration_noise = 0.1;
  int batch_size = 128;
  double lr = 3e-4;
  /// false: critics see the same corrupted observations as the actor (symmetric TD3).
  bool privileged_critic = true;
  ActionSpace action_space = ActionSpace::Planar4D;
  nn::ArchConfig arch{};
  FeatureScales scales{};

  void validate() const;
  std::string describe() const;
};

using Matrix = Eigen::MatrixXd;

/// Depth codes mapped to [0, 1], one column per image.
Eigen::VectorXd depth_features(const DepthImage& img);
Eigen::VectorXd state_features(const SelfState& s, ActionSpace space, const FeatureScales& scales);

/// Network inputs built only from corrupted observations.
class ActorInput {
 public:
  static ActorInput from(const std::vector<const Observation*>& obs, ActionSpace space,
                         const FeatureScales& scales);
  const Matrix& image() const { return image_; }
  const Matrix& state() const { return state_; }
  Eigen::Index batch() const { return image_.cols(); }

 private:
  Matrix image_, state_;
};

/// Network inputs for the critics: privileged observations, or corrupted ones for symmetric TD3.
class CriticInput {
 public:
  static CriticInput from(const std::vector<const Observation*>& obs, bool privileged,
                          ActionSpace space, const FeatureScales& scales);
  const Matrix& image() const { return image_; }
  const Matrix& state() const { return state_; }
  Eigen::Index batch() const { return image_.cols(); }

 private:
  Matrix image_, state_;
};

/// Column-batched view of replay samples.
struct TrainingBatch {
  ActorInput actor;        // o
  CriticInput critic;      // s
  ActorInput next_actor;   // o'
  CriticInput next_critic; // s'
  Matrix actions;          // action_dim x B, normalized
  Eigen::VectorXd rewards;
  Eigen::VectorXd terminal;  // 1 = no bootstrap
  Eigen::Index size() const { return rewards.size(); }
};

TrainingBatch make_batch(const std::vector<StoredTransition>& samples, const AgentConfig& cfg);

/// Normalized action in [-1, 1]^n to a vehicle command. `yaw` is only used by Heading3D.
Action to_physical(const Eigen::VectorXd& normalized, ActionSpace space, double yaw,
                   const VehicleLimits& limits = {});

/// Immutable copy of the actor that collectors act with.
class Policy {
 public:
  Policy(std::shared_ptr<const nn::Network<double>> net, nn::ParamSet<double> params,
         AgentConfig cfg, std::uint64_t version = 0);

  /// Normalized action: clip(actor(o)), plus exploration noise and a second clip when explore.
  Eigen::VectorXd act(const Observation& corrupted, bool explore, Rng& rng) const;

  const nn::ParamSet<double>& params() const { return params_; }
  std::uint64_t version() const { return version_; }
  const AgentConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const nn::Network<double>> net_;
  nn::ParamSet<double> params_;
  AgentConfig cfg_;
  std::uint64_t version_;
};

/// Intermediate values of a TD target computation.
struct TargetTrace {
  Eigen::VectorXd y;
  Matrix next_actions;  // after smoothing and clipping
  Matrix noise;         // clipped smoothing noise
  Eigen::VectorXd q1, q2;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

struct UpdateStats {
  double critic_loss = 0.0;
  bool actor_updated = false;
  double actor_loss = 0.0;
};

/// Asymmetric actor-critic TD3 learner holding six parameter sets.
class Agent {
 public:
  Agent(AgentConfig cfg, std::uint64_t seed);

  const AgentConfig& config() const { return cfg_; }
  const nn::Network<double>& actor_net() const { return *actor_net_; }
  const nn::Network<double>& critic_net() const { return *critic_net_; }

  nn::ParamSet<double>& actor() { return actor_; }
  nn::ParamSet<double>& actor_target() { return actor_target_; }
  nn::ParamSet<double>& critic(int j) { return j == 0 ? critic1_ : critic2_; }
  nn::ParamSet<double>& critic_target(int j) { return j == 0 ? critic1_target_ : critic2_target_; }
  const nn::ParamSet<double>& actor() const { return actor_; }
  const nn::ParamSet<double>& critic(int j) const { return j == 0 ? critic1_ : critic2_; }
  const nn::ParamSet<double>& critic_target(int j) const {
    return j == 0 ? critic1_target_ : critic2_target_;
  }
  const nn::ParamSet<double>& actor_target() const { return actor_target_; }

  std::int64_t critic_updates() const { return critic_updates_; }
  std::int64_t actor_updates() const { return actor_updates_; }

  std::shared_ptr<const Policy> snapshot(std::uint64_t version = 0) const;
  Eigen::VectorXd select_action(const Observation& corrupted, bool explore, Rng& rng) const;

  TargetTrace td_target_trace(const TrainingBatch& batch, Rng& rng) const;
  Eigen::VectorXd td_target(const TrainingBatch& batch, Rng& rng) const;

  /// Q_j(s, a) on the given batch (1 x B).
  Matrix q_values(int j, const CriticInput& s, const Matrix& actions, nn::Mode mode) const;

  /// Half-MSE of critic j against y and its parameter gradient; no state change.
  LossGrad critic_loss_grad(int j, const TrainingBatch& batch, const Eigen::VectorXd& y,
                            nn::ForwardCache<double>* cache = nullptr) const;
  /// -mean_b min_j Q_j(s_b, clip(actor(o_b))) and its actor gradient; no state change.
  /// Saturated outputs pass gradient only when descent moves them back inside [-1, 1].
  LossGrad actor_loss_grad(const TrainingBatch& batch,
                           nn::ForwardCache<double>* cache = nullptr) const;

  double critic_update(const TrainingBatch& batch, Rng& rng);
  double actor_update(const TrainingBatch& batch);
  void soft_update();

  /// Critic update, then actor update and soft update every policy_delay-th call.
  UpdateStats train_step(const TrainingBatch& batch, Rng& rng);

  std::uint64_t checkpoint_hash() const;
  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  AgentConfig cfg_;
  nn::AdamConfig adam_;
  std::shared_ptr<const nn::Network<double>> actor_net_;
  std::shared_ptr<const nn::Network<double>> critic_net_;
  nn::ParamSet<double> actor_, actor_target_;
  nn::ParamSet<double> critic1_, critic2_, critic1_target_, critic2_target_;
  std::int64_t critic_updates_ = 0;
  std::int64_t actor_updates_ = 0;
};

}  // namespace dprl
