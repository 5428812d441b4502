#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dprl/orchestrator.hpp"

namespace dprl {

/// Bad configuration input. `line` is 0 when the problem is not tied to a file line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

/// Parses `[section]` headers and `key = value` lines on top of `base`.
/// Blank lines and lines starting with '#' or ';' are ignored; unknown sections
/// and keys are errors.
TrainConfig parse_config(std::istream& is, const TrainConfig& base = full_preset(),
                         const std::string& source = "<config>");

/// Sets one value from a `section.key` name.
void apply_setting(TrainConfig& cfg, std::string_view dotted_key, std::string_view value,
                   const std::string& source = "<override>");

/// Applies DPRL_<SECTION>__<KEY> variables found through `lookup` (defaults to getenv).
void apply_env_overrides(TrainConfig& cfg,
                         const std::function<const char*(const char*)>& lookup = nullptr);

/// Every key as `section.key`, in serialization order.
std::vector<std::string> config_keys();

/// Full config in the parse_config format; parsing the result reproduces `cfg` exactly.
std::string serialize_config(const TrainConfig& cfg);

}  // namespace dprl
