#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dprl/orchestrator.hpp"
#include "fixtures.hpp"

using namespace dprl;
namespace fs = std::filesystem;

namespace {

TrainConfig micro_config() {
  auto cfg = smoke_preset();
  cfg.env.episode.max_episode_steps = 50;
  cfg.run.total_timesteps = 600;
  cfg.run.learning_start = 200;
  cfg.run.eval_interval = 300;
  cfg.run.eval_episodes = 2;
  return cfg;
}

EpisodeRecord episode(EpisodeEvent e, int steps, double reward) {
  EpisodeRecord r;
  r.outcome = e;
  r.steps = steps;
  r.reward = reward;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Steers straight at the goal at full planar speed.
Eigen::VectorXd toward_goal(const NavEnv& env) {
  const Eigen::Vector3d d = env.goal() - env.vehicle().position;
  Eigen::VectorXd a(4);
  const Eigen::Vector2d h = d.head<2>().normalized();
  a << h.x(), h.y(), std::clamp(d.z(), -1.0, 1.0), 0.0;
  return a;
}

}  // namespace

TEST_SUITE("orchestrator") {
  TEST_CASE("metric definitions") {
    auto m = summarize({episode(EpisodeEvent::Goal, 190, 12.0), episode(EpisodeEvent::Collision, 40, -6.0)});
    CHECK(m.sr == 0.5);
    REQUIRE(m.asse.has_value());
    CHECK(*m.asse == 190.0);
    CHECK(m.aer == 3.0);

    m = summarize({episode(EpisodeEvent::Goal, 10, 1.0), episode(EpisodeEvent::Goal, 20, 1.0)});
    CHECK(m.sr == 1.0);
    CHECK(*m.asse == 15.0);

    m = summarize({episode(EpisodeEvent::Timeout, 500, -3.0), episode(EpisodeEvent::OutOfBounds, 9, -5.5)});
    CHECK(m.sr == 0.0);
    CHECK_FALSE(m.asse.has_value());
    const auto line = metrics_line({100, 50, m.sr, m.aer, m.asse});
    CHECK(line.find("ASSE") == std::string::npos);
    CHECK(line.find("\"SR\":0.0") != std::string::npos);
    CHECK(metrics_line({1, 0, 1.0, 2.0, 3.5}).find("\"ASSE\":3.5") != std::string::npos);
  }

  TEST_CASE("environment episode mechanics") {
    auto cfg = desk_preset().env;
    cfg.field.count = 0;
    NavEnv env(cfg, 1, 2);
    env.reset(std::numbers::pi / 2);
    CHECK(env.goal().isApprox(Eigen::Vector3d(0.0, 20.0, 5.0)));
    CHECK(env.vehicle().yaw == doctest::Approx(std::numbers::pi / 2));
    CHECK(env.privileged().privileged);
    CHECK_FALSE(env.corrupted().privileged);
    CHECK(env.privileged().state.heading_error() == doctest::Approx(0.0));
    CHECK(env.trajectory().size() == 1);

    StepResult last;
    while (!env.done()) last = env.step(toward_goal(env));
    CHECK(last.event == EpisodeEvent::Goal);
    // 18 m at 0.3 m per step
    CHECK(env.step_index() == 60);
    CHECK(env.trajectory().size() == 61);
    double sum = 0.0;
    for (const auto& row : env.trajectory()) sum += row.reward;
    CHECK(sum == env.episode_reward());
    CHECK(env.trajectory().back().reward > 10.0);
    CHECK_THROWS_AS(env.step(toward_goal(env)), std::logic_error);

    env.reset(0.0);
    CHECK_THROWS_AS(env.step(Eigen::VectorXd::Zero(3)), InvalidAction);
  }

  TEST_CASE("environment outcomes: timeout and out of bounds") {
    auto cfg = desk_preset().env;
    cfg.field.count = 0;
    cfg.episode.max_episode_steps = 5;
    NavEnv env(cfg, 1, 2);
    env.reset(0.0);
    StepResult r;
    while (!env.done()) r = env.step(Eigen::VectorXd::Zero(4));
    CHECK(r.event == EpisodeEvent::Timeout);
    CHECK(env.step_index() == 5);

    cfg.episode.max_episode_steps = 300;
    NavEnv down(cfg, 1, 2);
    down.reset(0.0);
    Eigen::VectorXd sink(4);
    sink << 0.0, 0.0, -1.0, 0.0;
    while (!down.done()) r = down.step(sink);
    CHECK(r.event == EpisodeEvent::OutOfBounds);
    CHECK(r.reward < -5.0 + 1.0 + 1e-12);
  }

  TEST_CASE("evaluation is deterministic and spreads goals evenly") {
    auto cfg = micro_config();
    cfg.finalize();
    Agent agent(cfg.agent, 5);
    const auto field = generate_field(9, cfg.env.effective_field_spec());
    const auto a = evaluate(*agent.snapshot(), cfg.env, field, 4, 77);
    const auto b = evaluate(*agent.snapshot(), cfg.env, field, 4, 77);
    REQUIRE(a.episodes.size() == 4);
    for (int k = 0; k < 4; ++k) {
      CHECK(a.episodes[k].reward == b.episodes[k].reward);
      CHECK(a.episodes[k].steps == b.episodes[k].steps);
      const double gap = wrap_angle(a.episodes[(k + 1) % 4].bearing - a.episodes[k].bearing);
      CHECK(gap == doctest::Approx(std::numbers::pi / 2));
    }
    CHECK(a.aer == b.aer);
  }

  TEST_CASE("variants and presets") {
    auto cfg = desk_preset();
    CHECK(cfg.env.field.count == 15);
    CHECK(cfg.env.goal_distance == 20.0);
    CHECK(cfg.env.episode.max_episode_steps == 300);
    CHECK(cfg.run.total_timesteps == 60000);
    auto v = cfg;
    apply_variant(v, Variant::PrivilegedOnly);
    CHECK(v.run.n_envs == 1);
    v = cfg;
    apply_variant(v, Variant::DistributedOnly);
    CHECK_FALSE(v.agent.privileged_critic);
    v = cfg;
    apply_variant(v, Variant::Heading3D);
    v.finalize();
    CHECK(v.agent.action_space == ActionSpace::Heading3D);
    CHECK(parse_variant("distributed-only") == Variant::DistributedOnly);
    CHECK_THROWS(parse_variant("nope"));

    const auto p = full_preset();
    CHECK(p.run.n_envs == 3);
    CHECK(p.run.total_timesteps == 330000);
    CHECK(p.run.learning_start == 2000);
    CHECK(p.run.buffer_capacity == 50000);
    CHECK(p.env.goal_distance == 65.0);
    CHECK(p.env.episode.max_episode_steps == 500);
  }

  TEST_CASE("lockstep training is reproducible and keeps its accounting") {
    auto cfg = micro_config();
    const fs::path base = fs::temp_directory_path() / "dprl_orch_test";
    fs::remove_all(base);
    std::vector<std::pair<std::uint64_t, double>> stream[2];
    long random_phase_bad = 0, flags_bad = 0;
    TrainingReport rep[2];
    for (int k = 0; k < 2; ++k) {
      TrainHooks hooks;
      hooks.on_transition = [&, k](const Transition& t, std::uint64_t seq) {
        stream[k].emplace_back(seq, t.reward + t.action.sum());
        if (!t.s_priv.privileged || t.o_corrupt.privileged || !t.next_s_priv.privileged ||
            t.next_o_corrupt.privileged) {
          ++flags_bad;
        }
        if (seq < 200 && (t.action.head(4).array().abs() > 1.0).any()) ++random_phase_bad;
      };
      rep[k] = train(cfg, base / std::to_string(k), hooks);
    }
    CHECK(stream[0] == stream[1]);
    CHECK(flags_bad == 0);
    CHECK(random_phase_bad == 0);
    CHECK(slurp(base / "0" / "metrics.jsonl") == slurp(base / "1" / "metrics.jsonl"));
    CHECK(slurp(base / "0" / "checkpoints" / "final.ckpt") ==
          slurp(base / "1" / "checkpoints" / "final.ckpt"));
    for (const auto& r : rep) {
      CHECK(r.env_steps == 600);
      CHECK(r.transitions_pushed == 600);
      CHECK(r.learner_steps == 400);
      CHECK(r.actor_updates == 200);
      CHECK(r.curve.size() == 2);
      CHECK(r.max_snapshot_lag < cfg.run.snapshot_interval);
      CHECK(r.final_eval.episodes.size() == 2);
    }
    CHECK(fs::exists(base / "0" / "eval_final" / "episode_001.txt"));
    fs::remove_all(base);
  }

  TEST_CASE("train frequency sets the learner rate") {
    auto cfg = micro_config();
    cfg.run.train_frequency = 2;
    const auto r = train(cfg);
    CHECK(r.learner_steps == 200);
    CHECK(r.actor_updates == 100);
  }

  TEST_CASE("async collectors lose nothing") {
    auto cfg = micro_config();
    cfg.run.mode = RunMode::Async;
    cfg.run.max_collector_lead = 50;
    const auto r = train(cfg);
    CHECK(r.env_steps == 600);
    CHECK(r.transitions_pushed == 600);
    CHECK(r.learner_steps == 400);
    CHECK(r.actor_updates == 200);
    CHECK(r.max_snapshot_lag < cfg.run.snapshot_interval);
    CHECK(r.curve.size() == 2);
    CHECK(r.curve.back().step == 600);
  }

  TEST_CASE("invalid run configs are rejected") {
    auto cfg = micro_config();
    cfg.run.total_timesteps = 100;
    CHECK_THROWS_AS(train(cfg), std::invalid_argument);
    cfg = micro_config();
    cfg.run.n_envs = 0;
    CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  }
}
