#pragma once

#include "qex/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace qex {

// Run configuration: a flat "section.key = value" text format. `[section]`
// headers prefix the keys that follow; `#` starts a comment. Numbers are
// parsed exactly and written back in shortest round-trip form.

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in, const std::string& origin = "<config>");
KeyValues read_key_values(const std::string& path);
void write_key_values(std::ostream& out, const KeyValues& values);
/// Applies "key=value" overrides on top of `values`.
void apply_overrides(KeyValues& values, const std::vector<std::string>& overrides);

std::string format_double(double value);
double parse_double(const std::string& text, const std::string& key);
std::int64_t parse_int(const std::string& text, const std::string& key);

struct RunConfig {
  TrainerConfig trainer;
  std::vector<std::uint64_t> seeds;
  std::string label{"run"};
  std::string output_dir;  // empty: $QEX_OUTPUT_ROOT, else ./runs
  bool dump_trajectories{false};
};

/// Defaults, then `values`. Unknown keys and missing required keys
/// (env.kind, run.seeds) raise ConfigError naming the key.
RunConfig resolve_run_config(const KeyValues& values);
/// Every known key with its effective value.
KeyValues to_key_values(const RunConfig& config);
std::vector<std::string> known_config_keys();

/// Output root after applying the environment-variable fallback.
std::string output_root(const RunConfig& config);

inline constexpr const char* kOutputRootEnv = "QEX_OUTPUT_ROOT";

struct SweepSpec {
  std::string parameter;
  std::vector<std::string> values;
  KeyValues base;
  int max_cells{64};
};

/// Splits sweep.parameter / sweep.values / sweep.max_cells out of a config file.
SweepSpec parse_sweep_spec(const KeyValues& values);

}  // namespace qex
