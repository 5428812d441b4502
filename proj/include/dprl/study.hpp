#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dprl/orchestrator.hpp"

namespace dprl {

/// Variants x seeds grid of training runs on one preset.
struct StudyConfig {
  TrainConfig base = desk_preset();
  std::vector<Variant> variants = {Variant::Dprl, Variant::PrivilegedOnly, Variant::DistributedOnly,
                                   Variant::Heading3D};
  int seeds = 3;
  std::uint64_t first_seed = 1;
  int parallel_runs = 1;
  std::filesystem::path out_dir;  // per-run subdirectories <variant>_seed<k> when set
};

struct RunSummary {
  Variant variant = Variant::Dprl;
  std::uint64_t seed = 0;
  double final_sr = 0.0;
  double sr_auc = 0.0;  // trapezoid area under SR(step), divided by total steps
  std::vector<CurvePoint> curve;
  double wall_seconds = 0.0;
};

struct StudyResult {
  std::vector<RunSummary> runs;

  double mean_final_sr(Variant v) const;
  double mean_sr_auc(Variant v) const;
};

/// Normalized area under a success-rate curve that starts at (0, 0).
double sr_curve_area(const std::vector<CurvePoint>& curve, long total_steps);

StudyResult run_study(const StudyConfig& cfg,
                      const std::function<void(const RunSummary&)>& on_run = nullptr);

/// Ordering claims checked on a finished study.
struct OrderingVerdict {
  double dprl_sr = 0.0;
  double distributed_sr = 0.0;
  double heading_sr = 0.0;
  double dprl_auc = 0.0;
  double privileged_only_auc = 0.0;
  bool dprl_reaches_target = false;      // mean final SR >= 0.70
  bool beats_symmetric_critic = false;   // by >= 0.15 mean final SR
  bool beats_single_env_auc = false;     // strictly larger mean SR area
  bool beats_heading_variant = false;    // by >= 0.15 mean final SR
};

OrderingVerdict judge(const StudyResult& result);

/// Measured per-operation costs and the wall time they imply for a study.
struct RuntimeProjection {
  double env_step_seconds = 0.0;      // collector step including the actor query
  double learner_step_seconds = 0.0;  // one TD3 train_step at the configured batch size
  double run_seconds = 0.0;           // one run, single core
  double study_core_seconds = 0.0;    // all runs, single core
  double eight_core_seconds = 0.0;    // study spread over 8 equal cores
};

/// Times a few environment and learner steps with the study's real networks and
/// extrapolates. Evaluation cost is counted at its minimum (every episode
/// flying straight to its goal), so the projection is a lower bound.
RuntimeProjection project_study_runtime(const StudyConfig& cfg, int learner_probe_steps = 2);

}  // namespace dprl
