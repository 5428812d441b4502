#include "dprl/orchestrator.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#ifndef DPRL_SOURCE_REVISION
#define DPRL_SOURCE_REVISION "unknown"
#endif

namespace dprl {

namespace fs = std::filesystem;

std::string_view source_revision() { return DPRL_SOURCE_REVISION; }

std::string_view to_string(RunMode m) { return m == RunMode::Lockstep ? "lockstep" : "async"; }

RunMode parse_run_mode(std::string_view s) {
  if (s == "lockstep") return RunMode::Lockstep;
  if (s == "async") return RunMode::Async;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected lockstep or async)");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("run config: " + m); };
  if (n_envs < 1) fail("n_envs must be >= 1");
  if (total_timesteps <= learning_start) fail("total_timesteps must exceed learning_start");
  if (learning_start < 0) fail("learning_start must be >= 0");
  if (train_frequency < 1) fail("train_frequency must be >= 1");
  if (snapshot_interval < 1) fail("snapshot_interval must be >= 1");
  if (max_collector_lead < 1) fail("max_collector_lead must be >= 1");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (eval_episodes < 1) fail("eval_episodes must be >= 1");
  if (buffer_capacity < 1) fail("buffer_capacity must be >= 1");
  if (checkpoint_interval < 0) fail("checkpoint_interval must be >= 0");
}

void TrainConfig::finalize() {
  env.episode.crash_distance = env.reward.crash_distance;
  env.episode.sensing_cap = env.camera.d_max;
  env.validate();
  run.validate();
  agent.action_space = env.action_space;
  agent.scales.distance = env.goal_distance;
  agent.scales.limits = env.limits;
  agent.validate();
  if (run.learning_start + run.max_collector_lead < agent.batch_size) {
    throw std::invalid_argument("run config: learning_start + max_collector_lead must cover one batch");
  }
}

Metrics summarize(std::vector<EpisodeRecord> episodes) {
  Metrics m;
  m.episodes = std::move(episodes);
  if (m.episodes.empty()) return m;
  long successes = 0;
  double reward_sum = 0.0;
  double success_steps = 0.0;
  for (const auto& e : m.episodes) {
    reward_sum += e.reward;
    if (e.outcome == EpisodeEvent::Goal) {
      ++successes;
      success_steps += e.steps;
    }
  }
  const double n = static_cast<double>(m.episodes.size());
  m.sr = static_cast<double>(successes) / n;
  m.aer = reward_sum / n;
  if (successes > 0) m.asse = success_steps / static_cast<double>(successes);
  return m;
}

Metrics evaluate(const Policy& policy, const EnvConfig& env_cfg, const ObstacleField& field,
                 int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate needs at least one episode");
  NavEnv env(env_cfg, field, derive_seed(seed, 1));
  Rng rng(seed);
  const double spacing = 2.0 * std::numbers::pi / n_episodes;
  const double offset = std::uniform_real_distribution<double>(0.0, spacing)(rng);
  Rng unused(derive_seed(seed, 2));  // explore is off; act() draws nothing
  std::vector<EpisodeRecord> records;
  for (int k = 0; k < n_episodes; ++k) {
    EpisodeRecord rec;
    rec.bearing = wrap_angle(-std::numbers::pi + offset + spacing * k);
    env.reset(rec.bearing);
    StepResult last;
    while (!env.done()) last = env.step(policy.act(env.corrupted(), false, unused));
    rec.outcome = last.event;
    rec.steps = env.step_index();
    rec.reward = env.episode_reward();
    rec.trajectory = env.trajectory();
    records.push_back(std::move(rec));
  }
  return summarize(std::move(records));
}

namespace {

/// Latest published actor, swapped atomically under a mutex.
class SnapshotCell {
 public:
  void publish(std::shared_ptr<const Policy> p) {
    std::lock_guard lock(mutex_);
    current_ = std::move(p);
  }
  std::shared_ptr<const Policy> get() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const Policy> current_;
};

class Collector {
 public:
  Collector(const TrainConfig& cfg, int index)
      : env_(cfg.env, derive_seed(cfg.run.seed, index), derive_seed(cfg.run.seed, 100 + index)),
        rng_(derive_seed(cfg.run.seed, 200 + index)),
        action_dim_(action_dim(cfg.env.action_space)),
        index_(index) {
    env_.reset();
  }

  /// Keeps the current policy unless it lags the latest by `interval` versions or more.
  /// Returns the lag of the policy that will act.
  long refresh(const SnapshotCell& cell, int interval) {
    auto latest = cell.get();
    long lag = policy_ ? static_cast<long>(latest->version() - policy_->version()) : interval;
    if (lag >= interval) {
      policy_ = std::move(latest);
      lag = 0;
    }
    return lag;
  }

  /// One environment step. Empty when the simulator rejected the step and the episode was reset.
  std::optional<Transition> step(bool random_policy) {
    Eigen::VectorXd a(action_dim_);
    if (random_policy) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int i = 0; i < action_dim_; ++i) a[i] = u(rng_);
    } else {
      a = policy_->act(env_.corrupted(), true, rng_);
    }
    Transition t;
    t.s_priv = env_.privileged();
    t.o_corrupt = env_.corrupted();
    StepResult r;
    try {
      r = env_.step(a);
    } catch (const std::exception& e) {
      std::cerr << "collector " << index_ << ": episode aborted: " << e.what() << '\n';
      ++aborted_;
      env_.reset();
      return std::nullopt;
    }
    t.action.head(action_dim_) = a;
    t.reward = r.reward;
    t.next_s_priv = env_.privileged();
    t.next_o_corrupt = env_.corrupted();
    t.terminal = is_terminal(r.event) && r.event != EpisodeEvent::Timeout;
    t.truncated = r.event == EpisodeEvent::Timeout;
    if (env_.done()) {
      ++episodes_;
      env_.reset();
    }
    return t;
  }

  long episodes() const { return episodes_; }
  long aborted() const { return aborted_; }

 private:
  NavEnv env_;
  Rng rng_;
  std::shared_ptr<const Policy> policy_;
  int action_dim_;
  int index_;
  long episodes_ = 0;
  long aborted_ = 0;
};

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    fs::create_directories(dir_ / "checkpoints");
    metrics_.open(dir_ / "metrics.jsonl", std::ios::trunc);
    if (!metrics_) throw std::runtime_error("cannot write " + (dir_ / "metrics.jsonl").string());
  }

  void metrics(const CurvePoint& p) {
    if (!metrics_.is_open()) return;
    metrics_ << metrics_line(p) << '\n';
    metrics_.flush();
  }

  std::optional<std::string> checkpoint(const Agent& agent, const std::string& name) {
    if (dir_.empty()) return std::nullopt;
    const fs::path path = dir_ / "checkpoints" / name;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    agent.save(os);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return path.string();
  }

  void final_episodes(const Metrics& m) {
    if (!dir_.empty()) export_episodes(dir_ / "eval_final", m.episodes);
  }

 private:
  fs::path dir_;
  std::ofstream metrics_;
};

struct Shared {
  const TrainConfig& cfg;
  Agent agent;
  ReplayBuffer buffer;
  SnapshotCell cell;
  Rng learner_rng;
  ObstacleField eval_field;
  Outputs out;
  TrainingReport report;

  Shared(const TrainConfig& c, const fs::path& dir)
      : cfg(c),
        agent(c.agent, derive_seed(c.run.seed, 300)),
        buffer(c.run.buffer_capacity),
        learner_rng(derive_seed(c.run.seed, 301)),
        eval_field(generate_field(c.run.eval_seed, c.env.effective_field_spec())),
        out(dir) {
    cell.publish(agent.snapshot(0));
  }

  /// Environment steps that should have been matched by a learner step once `done` steps exist.
  long learner_target(long done) const {
    const long post = done - cfg.run.learning_start;
    return post > 0 ? post / cfg.run.train_frequency : 0;
  }

  bool learn_once() {
    if (buffer.size() < static_cast<std::size_t>(cfg.agent.batch_size)) return false;
    const auto batch = make_batch(buffer.sample(cfg.agent.batch_size, learner_rng), cfg.agent);
    agent.train_step(batch, learner_rng);
    ++report.learner_steps;
    cell.publish(agent.snapshot(static_cast<std::uint64_t>(report.learner_steps)));
    if (cfg.run.checkpoint_interval > 0 && report.learner_steps % cfg.run.checkpoint_interval == 0) {
      if (auto p = out.checkpoint(agent, "learner_" + std::to_string(report.learner_steps) + ".ckpt")) {
        report.checkpoints.push_back(*p);
      }
    }
    return true;
  }

  CurvePoint evaluate_at(long step, const Policy& policy, long learner_steps) {
    const Metrics m = evaluate(policy, cfg.env, eval_field, cfg.run.eval_episodes, cfg.run.eval_seed);
    CurvePoint p{step, learner_steps, m.sr, m.aer, m.asse};
    report.curve.push_back(p);
    out.metrics(p);
    if (step == cfg.run.total_timesteps) {
      report.final_eval = m;
      out.final_episodes(m);
    }
    return p;
  }
};

void train_lockstep(Shared& sh, std::vector<Collector>& collectors, const TrainHooks& hooks) {
  const auto& run = sh.cfg.run;
  for (long done = 0; done < run.total_timesteps;) {
    Collector& c = collectors[done % run.n_envs];
    sh.report.max_snapshot_lag =
        std::max(sh.report.max_snapshot_lag, c.refresh(sh.cell, run.snapshot_interval));
    auto t = c.step(done < run.learning_start);
    if (!t) continue;
    const auto seq = sh.buffer.push(*t);
    if (hooks.on_transition) hooks.on_transition(*t, seq);
    ++done;
    while (sh.report.learner_steps < sh.learner_target(done) && sh.learn_once()) {
    }
    if (done % run.eval_interval == 0 || done == run.total_timesteps) {
      const auto p = sh.evaluate_at(done, *sh.agent.snapshot(), sh.report.learner_steps);
      if (hooks.on_eval) hooks.on_eval(p);
    }
  }
  sh.report.env_steps = run.total_timesteps;
}

void train_async(Shared& sh, std::vector<Collector>& collectors, const TrainHooks& hooks) {
  const auto& run = sh.cfg.run;
  std::atomic<long> claimed{0}, done{0}, learned{0};
  std::atomic<long> max_lag{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto fail = [&](std::exception_ptr e) {
    std::lock_guard lock(failure_mutex);
    if (!failure) failure = e;
    stop = true;
  };
  using namespace std::chrono_literals;

  std::vector<std::thread> threads;
  for (auto& c : collectors) {
    threads.emplace_back([&, cp = &c] {
      try {
        for (;;) {
          const long s = claimed.fetch_add(1);
          if (s >= run.total_timesteps || stop) break;
          while (!stop && s - run.learning_start -
                                  learned.load() * static_cast<long>(run.train_frequency) >
                              run.max_collector_lead) {
            std::this_thread::sleep_for(1ms);
          }
          std::optional<Transition> t;
          while (!t && !stop) {
            const long lag = cp->refresh(sh.cell, run.snapshot_interval);
            long prev = max_lag.load();
            while (lag > prev && !max_lag.compare_exchange_weak(prev, lag)) {
            }
            t = cp->step(s < run.learning_start);
          }
          if (!t) break;
          sh.buffer.push(std::move(*t));
          ++done;
        }
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }

  const long final_target = sh.learner_target(run.total_timesteps);
  threads.emplace_back([&] {
    try {
      while (!stop && sh.report.learner_steps < final_target) {
        if (sh.report.learner_steps < sh.learner_target(done.load()) && sh.learn_once()) {
          learned = sh.report.learner_steps;
        } else {
          std::this_thread::sleep_for(1ms);
        }
      }
    } catch (...) {
      fail(std::current_exception());
    }
  });

  // This thread evaluates published snapshots as the step count crosses each interval.
  for (long next = run.eval_interval; next < run.total_timesteps && !stop; next += run.eval_interval) {
    while (done.load() < next && !stop) std::this_thread::sleep_for(5ms);
    if (stop) break;
    const auto policy = sh.cell.get();
    const Metrics m =
        evaluate(*policy, sh.cfg.env, sh.eval_field, run.eval_episodes, run.eval_seed);
    CurvePoint p{next, static_cast<long>(policy->version()), m.sr, m.aer, m.asse};
    sh.report.curve.push_back(p);
    sh.out.metrics(p);
    if (hooks.on_eval) hooks.on_eval(p);
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  sh.report.env_steps = done.load();
  sh.report.max_snapshot_lag = max_lag.load();
  const auto p = sh.evaluate_at(run.total_timesteps, *sh.agent.snapshot(), sh.report.learner_steps);
  if (hooks.on_eval) hooks.on_eval(p);
}

}  // namespace

TrainingReport train(const TrainConfig& input, const fs::path& out_dir, const TrainHooks& hooks) {
  TrainConfig cfg = input;
  cfg.finalize();
  const auto t0 = std::chrono::steady_clock::now();
  Shared sh(cfg, out_dir);
  std::vector<Collector> collectors;
  collectors.reserve(cfg.run.n_envs);
  for (int i = 0; i < cfg.run.n_envs; ++i) collectors.emplace_back(cfg, i);

  if (cfg.run.mode == RunMode::Lockstep) {
    train_lockstep(sh, collectors, hooks);
  } else {
    train_async(sh, collectors, hooks);
  }

  sh.report.transitions_pushed = sh.buffer.total_pushed();
  sh.report.actor_updates = sh.agent.actor_updates();
  for (const auto& c : collectors) {
    sh.report.episodes += c.episodes();
    sh.report.aborted_episodes += c.aborted();
  }
  if (auto p = sh.out.checkpoint(sh.agent, "final.ckpt")) sh.report.checkpoints.push_back(*p);
  sh.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sh.report;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Dprl: return "dprl";
    case Variant::PrivilegedOnly: return "privileged-only";
    case Variant::DistributedOnly: return "distributed-only";
    case Variant::Heading3D: return "heading3d";
  }
  return "unknown";
}

Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::Dprl, Variant::PrivilegedOnly, Variant::DistributedOnly, Variant::Heading3D}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(s) +
                              "' (dprl, privileged-only, distributed-only, heading3d)");
}

void apply_variant(TrainConfig& cfg, Variant v) {
  switch (v) {
    case Variant::Dprl: break;
    case Variant::PrivilegedOnly: cfg.run.n_envs = 1; break;
    case Variant::DistributedOnly: cfg.agent.privileged_critic = false; break;
    case Variant::Heading3D: cfg.env.action_space = ActionSpace::Heading3D; break;
  }
}

TrainConfig full_preset() { return TrainConfig{}; }

TrainConfig desk_preset() {
  TrainConfig cfg;
  cfg.env.field.count = 15;
  cfg.env.field.disc_radius = 30.0;
  cfg.env.field.clearance = 2.0;
  cfg.env.goal_distance = 20.0;
  cfg.env.episode.max_episode_steps = 300;
  cfg.run.total_timesteps = 60000;
  cfg.run.eval_interval = 5000;
  return cfg;
}

TrainConfig smoke_preset() {
  TrainConfig cfg = desk_preset();
  cfg.env.episode.max_episode_steps = 100;
  cfg.agent.arch.conv1_channels = 2;
  cfg.agent.arch.conv2_channels = 2;
  cfg.agent.arch.conv3_channels = 3;
  cfg.agent.arch.first_stride = 2;
  cfg.agent.arch.hidden = 16;
  cfg.agent.batch_size = 8;
  cfg.run.total_timesteps = 2000;
  cfg.run.learning_start = 500;
  cfg.run.eval_interval = 1000;
  cfg.run.eval_episodes = 3;
  cfg.run.snapshot_interval = 10;
  cfg.run.buffer_capacity = 2000;
  cfg.run.mode = RunMode::Lockstep;
  return cfg;
}

void write_trajectory(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  os << "t x y z yaw d_o reward outcome\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.t << ' ' << r.position.x() << ' ' << r.position.y() << ' ' << r.position.z() << ' '
       << r.yaw << ' ' << r.d_o << ' ' << r.reward << ' ' << to_string(r.outcome) << '\n';
  }
}

void write_episode_table(std::ostream& os, const std::vector<EpisodeRecord>& episodes) {
  os << "episode outcome steps reward bearing\n" << std::setprecision(17);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    os << i << ' ' << to_string(e.outcome) << ' ' << e.steps << ' ' << e.reward << ' ' << e.bearing
       << '\n';
  }
}

void export_episodes(const fs::path& dir, const std::vector<EpisodeRecord>& episodes) {
  fs::create_directories(dir);
  std::ofstream table(dir / "episodes.txt");
  write_episode_table(table, episodes);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    std::ostringstream name;
    name << "episode_" << std::setw(3) << std::setfill('0') << i << ".txt";
    std::ofstream os(dir / name.str());
    write_trajectory(os, episodes[i].trajectory);
    if (!os) throw std::runtime_error("cannot write " + (dir / name.str()).string());
  }
  if (!table) throw std::runtime_error("cannot write " + (dir / "episodes.txt").string());
}

std::string metrics_line(const CurvePoint& p) {
  nlohmann::ordered_json j;
  j["step"] = p.step;
  j["learner_steps"] = p.learner_steps;
  j["SR"] = p.sr;
  j["AER"] = p.aer;
  if (p.asse) j["ASSE"] = *p.asse;
  return j.dump();
}

}  // namespace dprl
