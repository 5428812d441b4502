#pragma once

#include <cstdint>
#include <random>

#include "dprl/agent.hpp"
#include "dprl/replay.hpp"

namespace fixtures {

/// Small trunk and head so learner tests run in milliseconds.
inline dprl::AgentConfig tiny_agent_config() {
  dprl::AgentConfig cfg;
  cfg.arch.conv1_channels = 2;
  cfg.arch.conv2_channels = 2;
  cfg.arch.conv3_channels = 3;
  cfg.arch.hidden = 8;
  cfg.batch_size = 4;
  return cfg;
}

inline dprl::Observation random_observation(std::mt19937_64& rng, bool privileged) {
  std::uniform_int_distribution<int> code(0, 255);
  std::normal_distribution<double> n01(0.0, 1.0);
  dprl::Observation o;
  for (Eigen::Index i = 0; i < o.depth.codes.size(); ++i) {
    o.depth.codes.data()[i] = static_cast<std::uint8_t>(code(rng));
  }
  for (int i = 0; i < dprl::kSelfStateDim; ++i) o.state.values[i] = 5.0 * n01(rng);
  o.privileged = privileged;
  return o;
}

inline dprl::Transition random_transition(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  dprl::Transition t;
  t.s_priv = random_observation(rng, true);
  t.o_corrupt = random_observation(rng, false);
  t.next_s_priv = random_observation(rng, true);
  t.next_o_corrupt = random_observation(rng, false);
  t.action = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng));
  t.reward = u(rng);
  t.terminal = u(rng) > 0.6;
  return t;
}

/// Transition whose every scalar field encodes `id`, so a record mixing two
/// pushes is detectable from the record alone.
inline dprl::Transition marked_transition(std::uint64_t id) {
  dprl::Transition t;
  const double v = static_cast<double>(id);
  const auto code = static_cast<std::uint8_t>(id % 251);
  dprl::Observation* obs[4] = {&t.s_priv, &t.o_corrupt, &t.next_s_priv, &t.next_o_corrupt};
  for (int k = 0; k < 4; ++k) {
    obs[k]->privileged = (k % 2 == 0);
    obs[k]->state.values.setConstant(v + k);
    obs[k]->depth.codes(0, 0) = code;
    obs[k]->depth.codes(dprl::kDepthRows - 1, dprl::kDepthCols - 1) = code;
  }
  t.action = Eigen::Vector4d(v, -v, 0.5 * v, 1.0);
  t.reward = v;
  return t;
}

/// The id a marked transition carries, or -1 if its fields disagree.
inline long long marked_id(const dprl::Transition& t) {
  const double v = t.reward;
  const auto code = static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) % 251);
  const dprl::Observation* obs[4] = {&t.s_priv, &t.o_corrupt, &t.next_s_priv, &t.next_o_corrupt};
  for (int k = 0; k < 4; ++k) {
    if ((obs[k]->state.values.array() != v + k).any()) return -1;
    if (obs[k]->depth.codes(0, 0) != code) return -1;
    if (obs[k]->depth.codes(dprl::kDepthRows - 1, dprl::kDepthCols - 1) != code) return -1;
  }
  if (t.action != Eigen::Vector4d(v, -v, 0.5 * v, 1.0)) return -1;
  return static_cast<long long>(v);
}

}  // namespace fixtures
