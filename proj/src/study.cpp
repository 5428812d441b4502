#include "dprl/study.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace dprl {

namespace {

template <typename F>
double mean_over(const StudyResult& r, Variant v, F f) {
  double sum = 0.0;
  int n = 0;
  for (const auto& run : r.runs) {
    if (run.variant == v) {
      sum += f(run);
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

double StudyResult::mean_final_sr(Variant v) const {
  return mean_over(*this, v, [](const RunSummary& s) { return s.final_sr; });
}

double StudyResult::mean_sr_auc(Variant v) const {
  return mean_over(*this, v, [](const RunSummary& s) { return s.sr_auc; });
}

double sr_curve_area(const std::vector<CurvePoint>& curve, long total_steps) {
  if (total_steps <= 0) return 0.0;
  double area = 0.0;
  long prev_step = 0;
  double prev_sr = 0.0;
  for (const auto& p : curve) {
    area += 0.5 * (prev_sr + p.sr) * static_cast<double>(p.step - prev_step);
    prev_step = p.step;
    prev_sr = p.sr;
  }
  return area / static_cast<double>(total_steps);
}

StudyResult run_study(const StudyConfig& cfg, const std::function<void(const RunSummary&)>& on_run) {
  struct Job {
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto v : cfg.variants) {
    for (int k = 0; k < cfg.seeds; ++k) jobs.push_back({v, cfg.first_seed + k});
  }
  StudyResult result;
  result.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      try {
        TrainConfig tc = cfg.base;
        apply_variant(tc, jobs[i].variant);
        tc.run.seed = jobs[i].seed;
        std::filesystem::path dir;
        if (!cfg.out_dir.empty()) {
          dir = cfg.out_dir / (std::string(to_string(jobs[i].variant)) + "_seed" +
                               std::to_string(jobs[i].seed));
        }
        const auto rep = train(tc, dir);
        RunSummary s;
        s.variant = jobs[i].variant;
        s.seed = jobs[i].seed;
        s.final_sr = rep.final_eval.sr;
        s.curve = rep.curve;
        s.sr_auc = sr_curve_area(rep.curve, tc.run.total_timesteps);
        s.wall_seconds = rep.wall_seconds;
        std::lock_guard lock(report_mutex);
        result.runs[i] = s;
        if (on_run) on_run(s);
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  std::vector<std::thread> threads;
  for (int t = 1; t < std::max(1, cfg.parallel_runs); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

OrderingVerdict judge(const StudyResult& r) {
  OrderingVerdict v;
  v.dprl_sr = r.mean_final_sr(Variant::Dprl);
  v.distributed_sr = r.mean_final_sr(Variant::DistributedOnly);
  v.heading_sr = r.mean_final_sr(Variant::Heading3D);
  v.dprl_auc = r.mean_sr_auc(Variant::Dprl);
  v.privileged_only_auc = r.mean_sr_auc(Variant::PrivilegedOnly);
  v.dprl_reaches_target = v.dprl_sr >= 0.70;
  v.beats_symmetric_critic = v.dprl_sr - v.distributed_sr >= 0.15;
  v.beats_single_env_auc = v.dprl_auc > v.privileged_only_auc;
  v.beats_heading_variant = v.dprl_sr - v.heading_sr >= 0.15;
  return v;
}

RuntimeProjection project_study_runtime(const StudyConfig& cfg, int learner_probe_steps) {
  TrainConfig tc = cfg.base;
  tc.finalize();
  RuntimeProjection p;

  Agent agent(tc.agent, 1);
  NavEnv env(tc.env, 1, 2);
  env.reset();
  Rng rng(3);
  auto policy = agent.snapshot();
  ReplayBuffer buf(static_cast<std::size_t>(tc.agent.batch_size) * 2);

  const int env_probe = std::max(200, tc.agent.batch_size);
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < env_probe; ++i) {
    Transition t;
    t.s_priv = env.privileged();
    t.o_corrupt = env.corrupted();
    const Eigen::VectorXd a = policy->act(env.corrupted(), true, rng);
    const auto r = env.step(a);
    t.action.head(a.size()) = a;
    t.reward = r.reward;
    t.next_s_priv = env.privileged();
    t.next_o_corrupt = env.corrupted();
    buf.push(std::move(t));
    if (env.done()) env.reset();
  }
  p.env_step_seconds = seconds_since(t0) / env_probe;

  auto learner_step = [&] {
    const auto batch = make_batch(buf.sample(tc.agent.batch_size, rng), tc.agent);
    agent.train_step(batch, rng);
  };
  learner_step();  // warm-up
  t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < learner_probe_steps; ++i) learner_step();
  p.learner_step_seconds = seconds_since(t0) / std::max(1, learner_probe_steps);

  const auto& run = tc.run;
  const double learner_steps =
      static_cast<double>(run.total_timesteps - run.learning_start) / run.train_frequency;
  const double evals = std::ceil(static_cast<double>(run.total_timesteps) / run.eval_interval);
  const double min_episode_steps =
      std::ceil((tc.env.goal_distance - tc.env.episode.accept_radius) /
                (std::hypot(tc.env.limits.vx_max, tc.env.limits.vy_max) * tc.env.dt));
  const double eval_steps = evals * run.eval_episodes * min_episode_steps;
  p.run_seconds = run.total_timesteps * p.env_step_seconds + learner_steps * p.learner_step_seconds +
                  eval_steps * p.env_step_seconds;
  p.study_core_seconds = p.run_seconds * static_cast<double>(cfg.variants.size() * cfg.seeds);
  p.eight_core_seconds = p.study_core_seconds / 8.0;
  return p;
}

}  // namespace dprl
