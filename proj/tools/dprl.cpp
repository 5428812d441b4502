// Command-line front end: train, eval, gen-env, inspect-noise, report, study.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dprl/config.hpp"
#include "dprl/corruption.hpp"
#include "dprl/nn/checkpoint.hpp"
#include "dprl/orchestrator.hpp"
#include "dprl/study.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace dprl;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

/// Raised for bad configuration or arguments; maps to exit code 2.
struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArgs {
  std::string preset = "full";
  std::string config_path;
  std::string variant;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Base settings: full, desk or smoke")
        ->check(CLI::IsMember({"full", "desk", "smoke"}));
    cmd->add_option("-c,--config", config_path, "Config file ([section] key = value)");
    cmd->add_option("--variant", variant,
                    "Ablation variant: dprl, privileged-only, distributed-only, heading3d");
    cmd->add_option("-o,--override", overrides, "section.key=value (repeatable)")
        ->take_all();
  }

  TrainConfig load() const {
    try {
      TrainConfig cfg = preset == "desk" ? desk_preset()
                        : preset == "smoke" ? smoke_preset()
                                            : full_preset();
      if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw UsageFailure("cannot open config file " + config_path);
        cfg = parse_config(is, cfg, config_path);
      }
      apply_env_overrides(cfg);
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw UsageFailure("override '" + o + "' must be section.key=value");
        apply_setting(cfg, o.substr(0, eq), o.substr(eq + 1));
      }
      if (!variant.empty()) apply_variant(cfg, parse_variant(variant));
      cfg.finalize();
      return cfg;
    } catch (const ConfigError& e) {
      throw UsageFailure(e.what());
    } catch (const std::invalid_argument& e) {
      throw UsageFailure(e.what());
    }
  }
};

ordered_json curve_json(const CurvePoint& p) {
  ordered_json j = ordered_json::parse(metrics_line(p));
  return j;
}

ordered_json metrics_json(const Metrics& m) {
  ordered_json j;
  j["episodes"] = m.episodes.size();
  j["SR"] = m.sr;
  j["AER"] = m.aer;
  if (m.asse) j["ASSE"] = *m.asse;
  return j;
}

void print_summary(const Metrics& m) {
  std::cout << "SR " << m.sr << "  AER " << m.aer << "  ASSE ";
  if (m.asse) {
    std::cout << *m.asse;
  } else {
    std::cout << "n/a";
  }
  std::cout << "  (" << m.episodes.size() << " episodes)\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

int cmd_train(const ConfigArgs& args, const std::string& out_dir) {
  const TrainConfig cfg = args.load();
  fs::create_directories(out_dir);
  const std::string config_text = serialize_config(cfg);
  write_text(fs::path(out_dir) / "config.ini", config_text);

  TrainHooks hooks;
  hooks.on_eval = [](const CurvePoint& p) { std::cout << metrics_line(p) << std::endl; };
  const auto rep = train(cfg, out_dir, hooks);

  ordered_json j;
  j["config"] = config_text;
  j["source_revision"] = std::string(source_revision());
  j["seeds"] = {{"run", cfg.run.seed}, {"eval", cfg.run.eval_seed}};
  j["mode"] = std::string(to_string(cfg.run.mode));
  j["curve"] = ordered_json::array();
  for (const auto& p : rep.curve) j["curve"].push_back(curve_json(p));
  j["final_eval"] = metrics_json(rep.final_eval);
  j["env_steps"] = rep.env_steps;
  j["transitions_pushed"] = rep.transitions_pushed;
  j["learner_steps"] = rep.learner_steps;
  j["actor_updates"] = rep.actor_updates;
  j["episodes"] = rep.episodes;
  j["aborted_episodes"] = rep.aborted_episodes;
  j["max_snapshot_lag"] = rep.max_snapshot_lag;
  j["wall_seconds"] = rep.wall_seconds;
  j["checkpoints"] = rep.checkpoints;
  write_text(fs::path(out_dir) / "report.json", j.dump(2) + "\n");
  print_summary(rep.final_eval);
  return kOk;
}

int cmd_eval(const ConfigArgs& args, const std::string& checkpoint, const std::string& field_path,
             std::optional<std::uint64_t> field_seed, std::optional<std::uint64_t> seed,
             int episodes, const std::string& out_dir) {
  const TrainConfig cfg = args.load();
  if (!fs::exists(checkpoint)) {
    std::cerr << "error: checkpoint " << checkpoint << " not found\n";
    return kRuntimeError;
  }
  Agent agent(cfg.agent, 0);
  std::ifstream is(checkpoint, std::ios::binary);
  try {
    agent.load(is);
  } catch (const nn::CheckpointError& e) {
    std::cerr << "error: refusing checkpoint " << checkpoint << ": " << e.what()
              << "\n  (the checkpoint was written with a different network or learner configuration;"
                 " pass the config it was trained with)\n";
    return kRuntimeError;
  }
  ObstacleField field;
  if (!field_path.empty()) {
    std::ifstream fis(field_path);
    if (!fis) throw std::runtime_error("cannot open field file " + field_path);
    field = read_field(fis);
  } else {
    field = generate_field(field_seed.value_or(cfg.run.eval_seed), cfg.env.effective_field_spec());
  }
  const auto m = evaluate(*agent.snapshot(), cfg.env, field, episodes, seed.value_or(cfg.run.eval_seed));
  export_episodes(out_dir, m.episodes);
  write_text(fs::path(out_dir) / "metrics.json", metrics_json(m).dump(2) + "\n");
  print_summary(m);
  return kOk;
}

int cmd_gen_env(const ConfigArgs& args, std::uint64_t seed, const std::string& out_path) {
  const TrainConfig cfg = args.load();
  ObstacleField field;
  try {
    field = generate_field(seed, cfg.env.effective_field_spec());
  } catch (const InfeasibleFieldSpec& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  if (out_path == "-") {
    write_field(std::cout, field);
  } else {
    std::ofstream os(out_path);
    write_field(os, field);
    if (!os) throw std::runtime_error("cannot write " + out_path);
    std::cout << field.cylinders.size() << " cylinders written to " << out_path << '\n';
  }
  return kOk;
}

int cmd_inspect_noise(const ConfigArgs& args, std::uint64_t seed, const std::string& out_dir) {
  const TrainConfig cfg = args.load();
  const auto& noise = cfg.env.noise;
  fs::create_directories(out_dir);

  // Scene: the first training field seen from the start, facing bearing 0.
  const auto field = generate_field(derive_seed(cfg.run.seed, 0), cfg.env.effective_field_spec());
  VehicleState pose;
  pose.position = cfg.env.start;
  const DepthImage clean = render_depth(field, pose, cfg.env.camera);
  Rng rng(seed);
  const auto stages = corrupt_depth_stages(clean, noise, rng);
  const std::pair<const char*, const DepthImage*> images[] = {{"clean.pgm", &stages.clean},
                                                              {"salt_pepper.pgm", &stages.salt_pepper},
                                                              {"gaussian.pgm", &stages.gaussian},
                                                              {"blurred.pgm", &stages.blurred}};
  for (const auto& [name, img] : images) {
    std::ofstream os(fs::path(out_dir) / name, std::ios::binary);
    write_pgm(os, *img);
  }

  // Statistics on a flat mid-gray image, where neither stage saturates.
  DepthImage gray;
  gray.codes.setConstant(128);
  const long pixels_per_image = gray.codes.size();
  const int images_needed = static_cast<int>((1000000 + pixels_per_image - 1) / pixels_per_image);
  long impulses = 0, pixels = 0;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < images_needed; ++i) {
    const auto sp = apply_salt_pepper(gray, noise.p_sp, rng);
    impulses += (sp.codes.array() != 128).count();
    const auto g = apply_gaussian(gray, noise.mu_g, noise.sigma_g, rng);
    const Eigen::ArrayXXd d = g.codes.cast<double>().array() - 128.0;
    sum += d.sum();
    sum2 += d.square().sum();
    pixels += pixels_per_image;
  }
  const double mean_g = sum / pixels;
  const double std_g = std::sqrt(sum2 / pixels - mean_g * mean_g);

  const long draws = 1000000 / kSelfStateDim + 1;
  Eigen::Matrix<double, kSelfStateDim, 1> s1 = Eigen::Matrix<double, kSelfStateDim, 1>::Zero(), s2 = s1;
  double max_abs = 0.0;
  SelfState zero;
  for (long i = 0; i < draws; ++i) {
    const auto v = corrupt_state(zero, noise, rng).values;
    s1 += v;
    s2 += v.cwiseProduct(v);
    max_abs = std::max(max_abs, v.cwiseAbs().maxCoeff());
  }
  const Eigen::Matrix<double, kSelfStateDim, 1> m = s1 / draws;
  const Eigen::Matrix<double, kSelfStateDim, 1> sd = (s2 / draws - m.cwiseProduct(m)).cwiseSqrt();

  ordered_json j;
  j["pixels"] = pixels;
  j["impulse_fraction"] = static_cast<double>(impulses) / pixels;
  j["impulse_fraction_expected"] = noise.p_sp;
  j["impulse_fraction_binomial_sigma"] = std::sqrt(noise.p_sp * (1.0 - noise.p_sp) / pixels);
  j["gaussian_std_codes"] = std_g;
  j["gaussian_std_expected"] = noise.sigma_g;
  j["state_draws_per_component"] = draws;
  j["state_std"] = std::vector<double>(sd.data(), sd.data() + kSelfStateDim);
  j["state_std_expected"] = noise.sigma_s;
  j["state_max_abs_perturbation"] = max_abs;
  j["state_perturbation_bound"] = noise.state_clip * noise.sigma_s;
  ordered_json scene;
  scene["changed_by_salt_pepper"] = (stages.salt_pepper.codes.array() != stages.clean.codes.array()).count();
  scene["changed_by_gaussian"] = (stages.gaussian.codes.array() != stages.salt_pepper.codes.array()).count();
  scene["changed_by_blur"] = (stages.blurred.codes.array() != stages.gaussian.codes.array()).count();
  j["scene"] = scene;
  write_text(fs::path(out_dir) / "noise_stats.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  return kOk;
}

std::vector<CurvePoint> read_metrics(const fs::path& run_dir) {
  std::ifstream is(run_dir / "metrics.jsonl");
  if (!is) throw std::runtime_error("no metrics.jsonl in " + run_dir.string());
  std::vector<CurvePoint> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CurvePoint p;
    p.step = j.at("step").get<long>();
    p.learner_steps = j.value("learner_steps", 0L);
    p.sr = j.at("SR").get<double>();
    p.aer = j.at("AER").get<double>();
    if (j.contains("ASSE")) p.asse = j.at("ASSE").get<double>();
    out.push_back(p);
  }
  return out;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "summary.tsv");
  summary << "run\tfinal_step\tfinal_SR\tfinal_AER\tfinal_ASSE\tSR_area\n" << std::setprecision(10);
  for (const auto& r : runs) {
    const auto curve = read_metrics(r);
    if (curve.empty()) throw std::runtime_error(r + ": metrics.jsonl is empty");
    const std::string name = fs::path(r).lexically_normal().filename().empty()
                                 ? fs::path(r).lexically_normal().parent_path().filename().string()
                                 : fs::path(r).lexically_normal().filename().string();
    std::ofstream tsv(fs::path(out_dir) / (name + "_curve.tsv"));
    tsv << "step\tlearner_steps\tSR\tAER\tASSE\n" << std::setprecision(10);
    for (const auto& p : curve) {
      tsv << p.step << '\t' << p.learner_steps << '\t' << p.sr << '\t' << p.aer << '\t';
      if (p.asse) {
        tsv << *p.asse;
      } else {
        tsv << "NA";
      }
      tsv << '\n';
    }
    const auto& last = curve.back();
    summary << name << '\t' << last.step << '\t' << last.sr << '\t' << last.aer << '\t';
    if (last.asse) {
      summary << *last.asse;
    } else {
      summary << "NA";
    }
    summary << '\t' << sr_curve_area(curve, last.step) << '\n';
    std::cout << name << ": " << curve.size() << " evaluations, final SR " << last.sr << '\n';
  }
  return kOk;
}

int cmd_study(const ConfigArgs& args, int seeds, int parallel, bool project_only,
              const std::string& out_dir) {
  StudyConfig sc;
  sc.base = args.load();
  sc.seeds = seeds;
  sc.parallel_runs = parallel;
  sc.out_dir = out_dir;
  const auto proj = project_study_runtime(sc);
  std::cout << std::fixed << std::setprecision(3) << "env step " << proj.env_step_seconds
            << " s, learner step " << proj.learner_step_seconds << " s\n"
            << std::setprecision(1) << "projected: " << proj.run_seconds / 3600.0
            << " h per run, " << proj.study_core_seconds / 3600.0 << " core-hours, "
            << proj.eight_core_seconds / 3600.0 << " h on 8 cores\n";
  if (project_only) return kOk;
  const auto result = run_study(sc, [](const RunSummary& s) {
    std::cout << to_string(s.variant) << " seed " << s.seed << ": final SR " << s.final_sr
              << ", SR area " << s.sr_auc << std::endl;
  });
  const auto v = judge(result);
  ordered_json j;
  j["runs"] = ordered_json::array();
  for (const auto& r : result.runs) {
    j["runs"].push_back({{"variant", std::string(to_string(r.variant))},
                         {"seed", r.seed},
                         {"final_SR", r.final_sr},
                         {"SR_area", r.sr_auc},
                         {"wall_seconds", r.wall_seconds}});
  }
  j["verdict"] = {{"dprl_SR", v.dprl_sr},
                  {"distributed_only_SR", v.distributed_sr},
                  {"heading3d_SR", v.heading_sr},
                  {"dprl_SR_area", v.dprl_auc},
                  {"privileged_only_SR_area", v.privileged_only_auc},
                  {"dprl_reaches_0.70", v.dprl_reaches_target},
                  {"dprl_beats_symmetric_critic_by_0.15", v.beats_symmetric_critic},
                  {"dprl_beats_single_env_area", v.beats_single_env_auc},
                  {"dprl_beats_heading3d_by_0.15", v.beats_heading_variant}};
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "study.json", j.dump(2) + "\n");
  std::cout << j["verdict"].dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privileged TD3 navigation: training, evaluation and diagnostics"};
  app.require_subcommand(1);

  ConfigArgs train_args, eval_args, gen_args, noise_args, study_args;
  std::string out_dir;

  auto* train_cmd = app.add_subcommand("train", "Train an agent");
  train_args.attach(train_cmd);
  train_cmd->add_option("--out", out_dir, "Run directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_args.attach(eval_cmd);
  std::string checkpoint, field_path;
  std::optional<std::uint64_t> field_seed, eval_seed;
  int episodes = 30;
  eval_cmd->add_option("--checkpoint", checkpoint, "Agent checkpoint")->required();
  eval_cmd->add_option("--field", field_path, "Obstacle field file from gen-env");
  eval_cmd->add_option("--field-seed", field_seed, "Generate the field from this seed");
  eval_cmd->add_option("--seed", eval_seed, "Seed for goal bearings and observation noise");
  eval_cmd->add_option("-n,--episodes", episodes, "Episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* gen_cmd = app.add_subcommand("gen-env", "Generate an obstacle field");
  gen_args.attach(gen_cmd);
  std::uint64_t gen_seed = 0;
  std::string gen_out = "-";
  gen_cmd->add_option("--seed", gen_seed, "Field seed")->required();
  gen_cmd->add_option("--out", gen_out, "Output file ('-' for stdout)");

  auto* noise_cmd = app.add_subcommand("inspect-noise", "Write noise-stage images and statistics");
  noise_args.attach(noise_cmd);
  std::uint64_t noise_seed = 1;
  noise_cmd->add_option("--seed", noise_seed, "Noise seed");
  noise_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* report_cmd = app.add_subcommand("report", "Learning curves of finished runs as TSV");
  std::vector<std::string> runs;
  report_cmd->add_option("--run", runs, "Run directory (repeatable)")->required();
  report_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* study_cmd = app.add_subcommand("study", "Variant x seed ablation study");
  study_args.preset = "desk";
  study_args.attach(study_cmd);
  int seeds = 3, parallel = 1;
  bool project_only = false;
  study_cmd->add_option("--seeds", seeds, "Seeds per variant")->check(CLI::PositiveNumber);
  study_cmd->add_option("--parallel", parallel, "Concurrent runs")->check(CLI::PositiveNumber);
  study_cmd->add_flag("--project-only", project_only, "Only time a few steps and print the projection");
  study_cmd->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out_dir);
    if (*eval_cmd) {
      return cmd_eval(eval_args, checkpoint, field_path, field_seed, eval_seed, episodes, out_dir);
    }
    if (*gen_cmd) return cmd_gen_env(gen_args, gen_seed, gen_out);
    if (*noise_cmd) return cmd_inspect_noise(noise_args, noise_seed, out_dir);
    if (*report_cmd) return cmd_report(runs, out_dir);
    if (*study_cmd) return cmd_study(study_args, seeds, parallel, project_only, out_dir);
  } catch (const UsageFailure& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
