#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dprl/agent.hpp"
#include "dprl/env.hpp"
#include "dprl/replay.hpp"

namespace dprl {

enum class RunMode { Lockstep, Async };

std::string_view to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);

struct RunConfig {
  int n_envs = 3;
  std::uint64_t seed = 1;       // env i uses field seed derive_seed(seed, i)
  std::uint64_t eval_seed = 1000;
  long total_timesteps = 330000;
  long learning_start = 2000;
  int train_frequency = 1;      // environment steps per learner step
  int snapshot_interval = 100;  // max learner versions a collector may lag
  long max_collector_lead = 1000;  // async: env steps collectors may run ahead of the learner
  RunMode mode = RunMode::Async;
  long eval_interval = 10000;
  int eval_episodes = 30;
  std::size_t buffer_capacity = 50000;
  long checkpoint_interval = 0;  // 0: final checkpoint only

  void validate() const;
};

/// Complete description of a training run.
struct TrainConfig {
  EnvConfig env{};
  AgentConfig agent{};
  RunConfig run{};

  /// Checks each part and brings the agent's action space and feature scales in line with the env.
  void finalize();
};

struct EpisodeRecord {
  EpisodeEvent outcome = EpisodeEvent::Running;
  int steps = 0;
  double reward = 0.0;
  double bearing = 0.0;
  std::vector<TrajectoryRow> trajectory;
};

struct Metrics {
  double sr = 0.0;
  double aer = 0.0;
  std::optional<double> asse;  // absent when no episode succeeded
  std::vector<EpisodeRecord> episodes;
};

/// SR, AER and ASSE of the given episodes (in order).
Metrics summarize(std::vector<EpisodeRecord> episodes);

/// Deterministic evaluation: explore off, corrupted observations, goal bearings
/// evenly spaced around the circle from a seeded random offset.
Metrics evaluate(const Policy& policy, const EnvConfig& env, const ObstacleField& field,
                 int n_episodes, std::uint64_t seed);

struct CurvePoint {
  long step = 0;
  long learner_steps = 0;
  double sr = 0.0;
  double aer = 0.0;
  std::optional<double> asse;
};

struct TrainingReport {
  std::vector<CurvePoint> curve;
  Metrics final_eval;
  long env_steps = 0;
  std::uint64_t transitions_pushed = 0;
  long learner_steps = 0;
  long actor_updates = 0;
  long episodes = 0;
  long aborted_episodes = 0;
  long max_snapshot_lag = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> checkpoints;
};

/// Optional observers; all run on the orchestrating thread.
struct TrainHooks {
  std::function<void(const CurvePoint&)> on_eval;
  std::function<void(const Transition&, std::uint64_t seq)> on_transition;  // lockstep only
};

/// Runs collectors and the learner to total_timesteps, evaluating periodically.
/// With a non-empty out_dir, writes metrics.jsonl, checkpoints and eval trajectories there.
TrainingReport train(const TrainConfig& cfg, const std::filesystem::path& out_dir = {},
                     const TrainHooks& hooks = {});

/// The four configurations compared in the ablation study.
enum class Variant { Dprl, PrivilegedOnly, DistributedOnly, Heading3D };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);
void apply_variant(TrainConfig& cfg, Variant v);

/// Full-scale defaults.
TrainConfig full_preset();
/// Smaller world and budget for the ordering study (15 cylinders, 20 m goals, 60k steps).
TrainConfig desk_preset();
/// Tiny networks and 2000 steps; exercises the whole pipeline in seconds.
TrainConfig smoke_preset();

/// Writes `t x y z yaw d_o reward outcome` rows.
void write_trajectory(std::ostream& os, const std::vector<TrajectoryRow>& rows);
/// One line per episode: index outcome steps reward bearing.
void write_episode_table(std::ostream& os, const std::vector<EpisodeRecord>& episodes);
/// Trajectory files plus the episode table under `dir`.
void export_episodes(const std::filesystem::path& dir, const std::vector<EpisodeRecord>& episodes);

/// JSON line for one evaluation; ASSE omitted when absent.
std::string metrics_line(const CurvePoint& p);

/// Short git revision of the sources this library was built from ("unknown" outside a checkout).
std::string_view source_revision();

}  // namespace dprl
