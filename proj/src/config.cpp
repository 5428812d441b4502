#include "dprl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <istream>
#include <sstream>

namespace dprl {

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         message),
      line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Value conversion failures carry only the reason; callers add location and key.
struct BadValue {
  std::string why;
};

template <typename T>
T parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw BadValue{"expected a number, got '" + std::string(s) + "'"};
  }
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw BadValue{"expected true or false, got '" + std::string(s) + "'"};
}

// Shortest round-trip text, preferring plain decimals over exponents.
std::string format_double(double v) {
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (res.ec == std::errc() && res.ptr - buf <= 24) return std::string(buf, res.ptr);
  res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string format(T v) {
  if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else {
    return std::to_string(v);
  }
}

struct Entry {
  std::string section;
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

template <typename T, typename Access>
Entry field(std::string section, std::string key, Access access) {
  return Entry{
      std::move(section), std::move(key),
      [access](const TrainConfig& c) {
        TrainConfig copy = c;
        return format<T>(access(copy));
      },
      [access](TrainConfig& c, std::string_view v) {
        if constexpr (std::is_same_v<T, bool>) {
          access(c) = parse_bool(v);
        } else {
          access(c) = parse_number<T>(v);
        }
      }};
}

#define DPRL_FIELD(T, section, key, expr) field<T>(section, key, [](TrainConfig& c) -> T& { return expr; })

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e = {
        DPRL_FIELD(int, "environment", "obstacle_count", c.env.field.count),
        DPRL_FIELD(double, "environment", "obstacle_radius", c.env.field.radius),
        DPRL_FIELD(double, "environment", "obstacle_height", c.env.field.height),
        DPRL_FIELD(double, "environment", "spawn_radius", c.env.field.disc_radius),
        DPRL_FIELD(double, "environment", "clearance", c.env.field.clearance),
        DPRL_FIELD(double, "environment", "goal_distance", c.env.goal_distance),
        DPRL_FIELD(double, "environment", "goal_height", c.env.goal_height),
        DPRL_FIELD(double, "environment", "start_x", c.env.start.x()),
        DPRL_FIELD(double, "environment", "start_y", c.env.start.y()),
        DPRL_FIELD(double, "environment", "start_z", c.env.start.z()),
        DPRL_FIELD(double, "environment", "x_min", c.env.field.bounds.x.lo),
        DPRL_FIELD(double, "environment", "x_max", c.env.field.bounds.x.hi),
        DPRL_FIELD(double, "environment", "y_min", c.env.field.bounds.y.lo),
        DPRL_FIELD(double, "environment", "y_max", c.env.field.bounds.y.hi),
        DPRL_FIELD(double, "environment", "z_min", c.env.field.bounds.z.lo),
        DPRL_FIELD(double, "environment", "z_max", c.env.field.bounds.z.hi),
        DPRL_FIELD(double, "environment", "accept_radius", c.env.episode.accept_radius),
        DPRL_FIELD(int, "environment", "max_episode_steps", c.env.episode.max_episode_steps),

        DPRL_FIELD(double, "dynamics", "dt", c.env.dt),
        DPRL_FIELD(double, "dynamics", "vx_max", c.env.limits.vx_max),
        DPRL_FIELD(double, "dynamics", "vy_max", c.env.limits.vy_max),
        DPRL_FIELD(double, "dynamics", "vz_max", c.env.limits.vz_max),
        DPRL_FIELD(double, "dynamics", "yaw_rate_max", c.env.limits.yaw_rate_max),
        Entry{"dynamics", "action_space",
              [](const TrainConfig& c) { return std::string(to_string(c.env.action_space)); },
              [](TrainConfig& c, std::string_view v) {
                try {
                  c.env.action_space = parse_action_space(trim(v));
                } catch (const std::invalid_argument& ex) {
                  throw BadValue{ex.what()};
                }
              }},

        DPRL_FIELD(double, "camera", "horizontal_fov", c.env.camera.horizontal_fov),
        DPRL_FIELD(double, "camera", "d_max", c.env.camera.d_max),

        DPRL_FIELD(double, "reward", "eta_r", c.env.reward.eta_r),
        DPRL_FIELD(double, "reward", "eta_p", c.env.reward.eta_p),
        DPRL_FIELD(double, "reward", "eta_o", c.env.reward.eta_o),
        DPRL_FIELD(double, "reward", "crash_distance", c.env.reward.crash_distance),
        DPRL_FIELD(double, "reward", "safe_distance", c.env.reward.safe_distance),
        DPRL_FIELD(double, "reward", "goal_reward", c.env.reward.goal_reward),
        DPRL_FIELD(double, "reward", "crash_penalty", c.env.reward.crash_penalty),
        DPRL_FIELD(double, "reward", "oob_penalty", c.env.reward.oob_penalty),

        DPRL_FIELD(double, "noise", "salt_pepper_prob", c.env.noise.p_sp),
        DPRL_FIELD(double, "noise", "gaussian_mean", c.env.noise.mu_g),
        DPRL_FIELD(double, "noise", "gaussian_std", c.env.noise.sigma_g),
        DPRL_FIELD(int, "noise", "blur_kernel", c.env.noise.k_mb),
        DPRL_FIELD(double, "noise", "state_mean", c.env.noise.mu_s),
        DPRL_FIELD(double, "noise", "state_std", c.env.noise.sigma_s),
        DPRL_FIELD(double, "noise", "state_clip", c.env.noise.state_clip),

        DPRL_FIELD(long, "training", "total_timesteps", c.run.total_timesteps),
        DPRL_FIELD(long, "training", "learning_start", c.run.learning_start),
        DPRL_FIELD(int, "training", "train_frequency", c.run.train_frequency),
        DPRL_FIELD(int, "training", "batch_size", c.agent.batch_size),
        DPRL_FIELD(std::size_t, "training", "buffer_size", c.run.buffer_capacity),
        DPRL_FIELD(double, "training", "gamma", c.agent.gamma),
        DPRL_FIELD(double, "training", "tau", c.agent.tau),
        DPRL_FIELD(double, "training", "learning_rate", c.agent.lr),
        DPRL_FIELD(double, "training", "exploration_noise", c.agent.exploration_noise),
        DPRL_FIELD(int, "training", "policy_delay", c.agent.policy_delay),
        DPRL_FIELD(double, "training", "target_noise", c.agent.target_noise),
        DPRL_FIELD(double, "training", "target_noise_clip", c.agent.target_noise_clip),
        DPRL_FIELD(bool, "training", "privileged_critic", c.agent.privileged_critic),

        DPRL_FIELD(int, "orchestrator", "n_envs", c.run.n_envs),
        Entry{"orchestrator", "mode",
              [](const TrainConfig& c) { return std::string(to_string(c.run.mode)); },
              [](TrainConfig& c, std::string_view v) {
                try {
                  c.run.mode = parse_run_mode(trim(v));
                } catch (const std::invalid_argument& ex) {
                  throw BadValue{ex.what()};
                }
              }},
        DPRL_FIELD(int, "orchestrator", "snapshot_interval", c.run.snapshot_interval),
        DPRL_FIELD(long, "orchestrator", "max_collector_lead", c.run.max_collector_lead),
        DPRL_FIELD(long, "orchestrator", "eval_interval", c.run.eval_interval),
        DPRL_FIELD(int, "orchestrator", "eval_episodes", c.run.eval_episodes),
        DPRL_FIELD(long, "orchestrator", "checkpoint_interval", c.run.checkpoint_interval),
        DPRL_FIELD(std::uint64_t, "orchestrator", "seed", c.run.seed),
        DPRL_FIELD(std::uint64_t, "orchestrator", "eval_seed", c.run.eval_seed),

        DPRL_FIELD(int, "network", "conv1_channels", c.agent.arch.conv1_channels),
        DPRL_FIELD(int, "network", "conv2_channels", c.agent.arch.conv2_channels),
        DPRL_FIELD(int, "network", "conv3_channels", c.agent.arch.conv3_channels),
        DPRL_FIELD(int, "network", "first_stride", c.agent.arch.first_stride),
        DPRL_FIELD(int, "network", "hidden", c.agent.arch.hidden),
        DPRL_FIELD(double, "network", "leaky_slope", c.agent.arch.leaky_slope),
        DPRL_FIELD(bool, "network", "batch_norm", c.agent.arch.batch_norm),
    };
    return e;
  }();
  return entries;
}

#undef DPRL_FIELD

const Entry* find_entry(std::string_view section, std::string_view key) {
  for (const auto& e : registry()) {
    if (e.section == section && e.key == key) return &e;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  return std::any_of(registry().begin(), registry().end(),
                     [&](const Entry& e) { return e.section == section; });
}

void set_checked(TrainConfig& cfg, std::string_view section, std::string_view key,
                 std::string_view value, const std::string& source, int line) {
  const Entry* e = find_entry(section, key);
  const std::string name = std::string(section) + "." + std::string(key);
  if (!e) throw ConfigError(source, line, "unknown key '" + name + "'");
  try {
    e->set(cfg, value);
  } catch (const BadValue& bad) {
    throw ConfigError(source, line, "bad value for '" + name + "': " + bad.why);
  }
}

}  // namespace

TrainConfig parse_config(std::istream& is, const TrainConfig& base, const std::string& source) {
  TrainConfig cfg = base;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) {
        throw ConfigError(source, line_no, "unknown section '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source, line_no, "expected 'key = value', got '" + std::string(line) + "'");
    }
    if (section.empty()) throw ConfigError(source, line_no, "key outside of any [section]");
    set_checked(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), source, line_no);
  }
  return cfg;
}

void apply_setting(TrainConfig& cfg, std::string_view dotted_key, std::string_view value,
                   const std::string& source) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string_view::npos) {
    throw ConfigError(source, 0, "override '" + std::string(dotted_key) + "' must be section.key");
  }
  set_checked(cfg, trim(dotted_key.substr(0, dot)), trim(dotted_key.substr(dot + 1)), value, source,
              0);
}

void apply_env_overrides(TrainConfig& cfg, const std::function<const char*(const char*)>& lookup) {
  for (const auto& e : registry()) {
    std::string var = "DPRL_" + e.section + "__" + e.key;
    std::transform(var.begin(), var.end(), var.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    const char* v = lookup ? lookup(var.c_str()) : std::getenv(var.c_str());
    if (v) set_checked(cfg, e.section, e.key, v, "$" + var, 0);
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.section + "." + e.key);
  return out;
}

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& e : registry()) {
    if (e.section != section) {
      if (!section.empty()) os << '\n';
      section = e.section;
      os << '[' << section << "]\n";
    }
    os << e.key << " = " << e.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace dprl
