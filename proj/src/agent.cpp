#include "dprl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dprl/nn/checkpoint.hpp"

namespace dprl {

namespace {

Eigen::VectorXd clip_unit(const Eigen::VectorXd& v) { return v.cwiseMax(-1.0).cwiseMin(1.0); }

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw nn::NumericError(std::string("non-finite ") + what);
}

void fill_inputs(Matrix& image, Matrix& state, const std::vector<const Observation*>& obs,
                 ActionSpace space, const FeatureScales& scales) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  image.resize(kDepthRows * kDepthCols, n);
  state.resize(state_feature_dim(space), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    image.col(b) = depth_features(obs[b]->depth);
    state.col(b) = state_features(obs[b]->state, space, scales);
  }
}

}  // namespace

std::string_view to_string(ActionSpace s) {
  return s == ActionSpace::Planar4D ? "planar4d" : "heading3d";
}

ActionSpace parse_action_space(std::string_view s) {
  if (s == "planar4d") return ActionSpace::Planar4D;
  if (s == "heading3d") return ActionSpace::Heading3D;
  throw std::invalid_argument("unknown action space '" + std::string(s) +
                              "' (expected planar4d or heading3d)");
}

int action_dim(ActionSpace s) { return s == ActionSpace::Planar4D ? 4 : 3; }
int state_feature_dim(ActionSpace s) { return s == ActionSpace::Planar4D ? kSelfStateDim : 6; }

void AgentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("agent config: " + m); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0, 1]");
  if (policy_delay < 1) fail("policy_delay must be >= 1");
  if (!(target_noise >= 0.0) || !(target_noise_clip >= 0.0)) fail("smoothing noise must be >= 0");
  if (!(exploration_noise >= 0.0)) fail("exploration noise must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("learning rate must be positive");
  if (!(scales.distance > 0.0)) fail("distance scale must be positive");
}

std::string AgentConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "gamma " << gamma << " tau " << tau << " delay " << policy_delay << " smooth "
     << target_noise << ' ' << target_noise_clip << " explore " << exploration_noise << " batch "
     << batch_size << " lr " << lr << " privileged " << privileged_critic << " space "
     << to_string(action_space) << " scale " << scales.distance << ' ' << scales.limits.vx_max
     << ' ' << scales.limits.vy_max << ' ' << scales.limits.vz_max << ' '
     << scales.limits.yaw_rate_max;
  return os.str();
}

Eigen::VectorXd depth_features(const DepthImage& img) {
  // Row-major codes flatten to the (row, col) order the conv layers expect.
  return Eigen::Map<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>>(img.codes.data(),
                                                                         img.codes.size())
             .cast<double>() /
         255.0;
}

Eigen::VectorXd state_features(const SelfState& s, ActionSpace space, const FeatureScales& scales) {
  const auto& lim = scales.limits;
  const double pi = std::numbers::pi;
  if (space == ActionSpace::Planar4D) {
    Eigen::VectorXd f(kSelfStateDim);
    f << s.values[0] / scales.distance, s.values[1] / scales.distance,
        s.values[2] / scales.distance, s.values[3] / lim.vx_max, s.values[4] / lim.vy_max,
        s.values[5] / lim.vz_max, s.values[6] / pi, s.values[7] / lim.yaw_rate_max;
    return f;
  }
  Eigen::VectorXd f(6);
  f << std::hypot(s.values[0], s.values[1]) / scales.distance, s.values[2] / scales.distance,
      std::hypot(s.values[3], s.values[4]) / lim.vx_max, s.values[5] / lim.vz_max, s.values[6] / pi,
      s.values[7] / lim.yaw_rate_max;
  return f;
}

ActorInput ActorInput::from(const std::vector<const Observation*>& obs, ActionSpace space,
                            const FeatureScales& scales) {
  for (const auto* o : obs) {
    if (o->privileged) throw std::invalid_argument("actor input built from a privileged observation");
  }
  ActorInput in;
  fill_inputs(in.image_, in.state_, obs, space, scales);
  return in;
}

CriticInput CriticInput::from(const std::vector<const Observation*>& obs, bool privileged,
                              ActionSpace space, const FeatureScales& scales) {
  for (const auto* o : obs) {
    if (o->privileged != privileged) {
      throw std::invalid_argument(privileged ? "privileged critic fed a corrupted observation"
                                             : "symmetric critic fed a privileged observation");
    }
  }
  CriticInput in;
  fill_inputs(in.image_, in.state_, obs, space, scales);
  return in;
}

TrainingBatch make_batch(const std::vector<StoredTransition>& samples, const AgentConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n == 0) throw nn::UsageError("empty training batch");
  const int ad = action_dim(cfg.action_space);
  std::vector<const Observation*> o, s, o2, s2;
  TrainingBatch batch;
  batch.actions.resize(ad, n);
  batch.rewards.resize(n);
  batch.terminal.resize(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto& t = samples[b].transition;
    o.push_back(&t.o_corrupt);
    o2.push_back(&t.next_o_corrupt);
    s.push_back(cfg.privileged_critic ? &t.s_priv : &t.o_corrupt);
    s2.push_back(cfg.privileged_critic ? &t.next_s_priv : &t.next_o_corrupt);
    batch.actions.col(b) = t.action.head(ad);
    batch.rewards[b] = t.reward;
    batch.terminal[b] = t.terminal ? 1.0 : 0.0;
  }
  batch.actor = ActorInput::from(o, cfg.action_space, cfg.scales);
  batch.next_actor = ActorInput::from(o2, cfg.action_space, cfg.scales);
  batch.critic = CriticInput::from(s, cfg.privileged_critic, cfg.action_space, cfg.scales);
  batch.next_critic = CriticInput::from(s2, cfg.privileged_critic, cfg.action_space, cfg.scales);
  return batch;
}

Action to_physical(const Eigen::VectorXd& normalized, ActionSpace space, double yaw,
                   const VehicleLimits& limits) {
  const Eigen::VectorXd a = clip_unit(normalized);
  if (space == ActionSpace::Planar4D) {
    Action out;
    out.v_cmd = {a[0] * limits.vx_max, a[1] * limits.vy_max, a[2] * limits.vz_max};
    out.yaw_rate_cmd = a[3] * limits.yaw_rate_max;
    return out;
  }
  // Forward speed only: [-1, 1] covers [0, vx_max].
  const double forward = 0.5 * (a[0] + 1.0) * limits.vx_max;
  return heading_command_to_world(forward, a[1] * limits.vz_max, a[2] * limits.yaw_rate_max, yaw);
}

Policy::Policy(std::shared_ptr<const nn::Network<double>> net, nn::ParamSet<double> params,
               AgentConfig cfg, std::uint64_t version)
    : net_(std::move(net)), params_(std::move(params)), cfg_(std::move(cfg)), version_(version) {}

Eigen::VectorXd Policy::act(const Observation& corrupted, bool explore, Rng& rng) const {
  const auto in = ActorInput::from({&corrupted}, cfg_.action_space, cfg_.scales);
  const Matrix raw = net_->forward(params_, in.image(), in.state(), nn::Mode::Eval);
  require_finite(raw, "actor output");
  Eigen::VectorXd a = clip_unit(raw.col(0));
  if (explore && cfg_.exploration_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg_.exploration_noise);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(rng);
    a = clip_unit(a);
  }
  return a;
}

Agent::Agent(AgentConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  adam_.lr = cfg_.lr;
  const int sd = state_feature_dim(cfg_.action_space);
  const int ad = action_dim(cfg_.action_space);
  actor_net_ = std::make_shared<const nn::Network<double>>(nn::actor_spec(cfg_.arch, sd, ad));
  critic_net_ = std::make_shared<const nn::Network<double>>(nn::critic_spec(cfg_.arch, sd, ad));
  Rng rng(seed);
  actor_ = actor_net_->init(rng);
  critic1_ = critic_net_->init(rng);
  critic2_ = critic_net_->init(rng);
  actor_target_ = actor_;
  critic1_target_ = critic1_;
  critic2_target_ = critic2_;
}

std::shared_ptr<const Policy> Agent::snapshot(std::uint64_t version) const {
  return std::make_shared<const Policy>(actor_net_, actor_, cfg_, version);
}

Eigen::VectorXd Agent::select_action(const Observation& corrupted, bool explore, Rng& rng) const {
  return Policy(actor_net_, actor_, cfg_).act(corrupted, explore, rng);
}

Matrix Agent::q_values(int j, const CriticInput& s, const Matrix& actions, nn::Mode mode) const {
  Matrix extra(s.state().rows() + actions.rows(), s.batch());
  extra << s.state(), actions;
  return critic_net_->forward(critic(j), s.image(), extra, mode);
}

TargetTrace Agent::td_target_trace(const TrainingBatch& batch, Rng& rng) const {
  const Eigen::Index n = batch.size();
  if (n == 0) throw nn::UsageError("empty training batch");
  TargetTrace tr;
  const Matrix raw = actor_net_->forward(actor_target_, batch.next_actor.image(),
                                         batch.next_actor.state(), nn::Mode::Eval);
  require_finite(raw, "target actor output");
  tr.noise.resize(raw.rows(), n);
  tr.next_actions.resize(raw.rows(), n);
  std::normal_distribution<double> gauss(0.0, cfg_.target_noise);
  const double c = cfg_.target_noise_clip;
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double eps = cfg_.target_noise > 0.0 ? std::clamp(gauss(rng), -c, c) : 0.0;
      tr.noise(i, b) = eps;
      tr.next_actions(i, b) = std::clamp(std::clamp(raw(i, b), -1.0, 1.0) + eps, -1.0, 1.0);
    }
  }
  Matrix extra(batch.next_critic.state().rows() + raw.rows(), n);
  extra << batch.next_critic.state(), tr.next_actions;
  tr.q1 = critic_net_->forward(critic1_target_, batch.next_critic.image(), extra, nn::Mode::Eval)
              .row(0)
              .transpose();
  tr.q2 = critic_net_->forward(critic2_target_, batch.next_critic.image(), extra, nn::Mode::Eval)
              .row(0)
              .transpose();
  tr.y = batch.rewards.array() +
         cfg_.gamma * (1.0 - batch.terminal.array()) * tr.q1.cwiseMin(tr.q2).array();
  require_finite(tr.y, "TD target");
  return tr;
}

Eigen::VectorXd Agent::td_target(const TrainingBatch& batch, Rng& rng) const {
  return td_target_trace(batch, rng).y;
}

LossGrad Agent::critic_loss_grad(int j, const TrainingBatch& batch, const Eigen::VectorXd& y,
                                 nn::ForwardCache<double>* cache) const {
  const Eigen::Index n = batch.size();
  if (n == 0) throw nn::UsageError("empty training batch");
  nn::ForwardCache<double> local;
  auto* c = cache ? cache : &local;
  Matrix extra(batch.critic.state().rows() + batch.actions.rows(), n);
  extra << batch.critic.state(), batch.actions;
  const Matrix q = critic_net_->forward(critic(j), batch.critic.image(), extra, nn::Mode::Train, c);
  const Eigen::RowVectorXd diff = q.row(0) - y.transpose();
  LossGrad out;
  out.loss = 0.5 * diff.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(out.loss)) throw nn::NumericError("non-finite critic loss");
  out.grad = critic_net_->backward(critic(j), *c, diff / static_cast<double>(n)).params;
  return out;
}

LossGrad Agent::actor_loss_grad(const TrainingBatch& batch, nn::ForwardCache<double>* cache) const {
  const Eigen::Index n = batch.size();
  if (n == 0) throw nn::UsageError("empty training batch");
  nn::ForwardCache<double> local;
  auto* ac = cache ? cache : &local;
  const Matrix raw =
      actor_net_->forward(actor_, batch.actor.image(), batch.actor.state(), nn::Mode::Train, ac);
  const Matrix a = raw.cwiseMax(-1.0).cwiseMin(1.0);
  const Eigen::Index sd = batch.critic.state().rows();
  Matrix extra(sd + a.rows(), n);
  extra << batch.critic.state(), a;

  nn::ForwardCache<double> qc[2];
  Eigen::RowVectorXd q[2];
  for (int j = 0; j < 2; ++j) {
    q[j] = critic_net_->forward(critic(j), batch.critic.image(), extra, nn::Mode::Train, &qc[j]).row(0);
  }
  const double scale = 1.0 / static_cast<double>(n);
  Matrix out_grad[2] = {Matrix::Zero(1, n), Matrix::Zero(1, n)};
  LossGrad out;
  for (Eigen::Index b = 0; b < n; ++b) {
    const int pick = q[1][b] < q[0][b] ? 1 : 0;  // ties go to the first critic
    out.loss -= q[pick][b] * scale;
    out_grad[pick](0, b) = -scale;
  }
  if (!std::isfinite(out.loss)) throw nn::NumericError("non-finite actor loss");

  Matrix grad_a = Matrix::Zero(a.rows(), n);
  for (int j = 0; j < 2; ++j) {
    const auto g = critic_net_->backward(critic(j), qc[j], out_grad[j], {false, false});
    grad_a += g.extra.bottomRows(a.rows());
  }
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double r = raw(i, b), g = grad_a(i, b);
      const bool inward = (r > 1.0 && g > 0.0) || (r < -1.0 && g < 0.0);
      if (std::abs(r) > 1.0 && !inward) grad_a(i, b) = 0.0;
    }
  }
  out.grad = actor_net_->backward(actor_, *ac, grad_a).params;
  return out;
}

double Agent::critic_update(const TrainingBatch& batch, Rng& rng) {
  const Eigen::VectorXd y = td_target(batch, rng);
  double total = 0.0;
  for (int j = 0; j < 2; ++j) {
    nn::ForwardCache<double> cache;
    const auto lg = critic_loss_grad(j, batch, y, &cache);
    nn::adam_step(critic(j), lg.grad, adam_);
    critic_net_->update_running_stats(critic(j), cache);
    total += lg.loss;
  }
  ++critic_updates_;
  return 0.5 * total;
}

double Agent::actor_update(const TrainingBatch& batch) {
  nn::ForwardCache<double> cache;
  const auto lg = actor_loss_grad(batch, &cache);
  nn::adam_step(actor_, lg.grad, adam_);
  actor_net_->update_running_stats(actor_, cache);
  ++actor_updates_;
  return lg.loss;
}

void Agent::soft_update() {
  nn::soft_update(actor_target_, actor_, cfg_.tau);
  nn::soft_update(critic1_target_, critic1_, cfg_.tau);
  nn::soft_update(critic2_target_, critic2_, cfg_.tau);
}

UpdateStats Agent::train_step(const TrainingBatch& batch, Rng& rng) {
  UpdateStats st;
  st.critic_loss = critic_update(batch, rng);
  if (critic_updates_ % cfg_.policy_delay == 0) {
    st.actor_loss = actor_update(batch);
    st.actor_updated = true;
    soft_update();
  }
  return st;
}

std::uint64_t Agent::checkpoint_hash() const {
  return fnv1a(actor_net_->spec().describe() + " ## " + critic_net_->spec().describe() + " ## " +
               cfg_.describe());
}

void Agent::save(std::ostream& os) const {
  nn::Checkpoint ck;
  ck.hash = checkpoint_hash();
  ck.sets = {actor_, actor_target_, critic1_, critic2_, critic1_target_, critic2_target_};
  ck.meta = {critic_updates_, actor_updates_};
  nn::write_checkpoint(os, ck);
}

void Agent::load(std::istream& is) {
  auto ck = nn::read_checkpoint(is, checkpoint_hash());
  if (ck.sets.size() != 6 || ck.meta.size() != 2) {
    throw nn::CheckpointError("agent checkpoint must hold 6 parameter sets and 2 counters");
  }
  for (int i = 0; i < 6; ++i) {
    const auto& net = i < 2 ? *actor_net_ : *critic_net_;
    if (ck.sets[i].values.size() != net.param_count() ||
        ck.sets[i].buffers.size() != net.buffer_count()) {
      throw nn::CheckpointError("checkpoint parameter counts do not match the architecture");
    }
  }
  actor_ = std::move(ck.sets[0]);
  actor_target_ = std::move(ck.sets[1]);
  critic1_ = std::move(ck.sets[2]);
  critic2_ = std::move(ck.sets[3]);
  critic1_target_ = std::move(ck.sets[4]);
  critic2_target_ = std::move(ck.sets[5]);
  critic_updates_ = ck.meta[0];
  actor_updates_ = ck.meta[1];
}

}  // namespace dprl
