#include "qex/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace qex {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

template <typename Enum>
Enum parse_enum(const std::string& text, const std::string& key,
                std::initializer_list<std::pair<const char*, Enum>> choices) {
  std::string names;
  for (const auto& [name, value] : choices) {
    if (text == name) return value;
    names += names.empty() ? name : std::string("|") + name;
  }
  throw ConfigError(key, "expected one of " + names + ", got '" + text + "'");
}

template <typename Enum>
std::string enum_name(Enum value, std::initializer_list<std::pair<const char*, Enum>> choices) {
  for (const auto& [name, v] : choices) {
    if (v == value) return name;
  }
  return "?";
}

const std::initializer_list<std::pair<const char*, EnvKind>> kEnvKinds = {{"corridor", EnvKind::corridor},
                                                                          {"tag", EnvKind::tag}};
const std::initializer_list<std::pair<const char*, ScheduleMode>> kSchedules = {{"rcb", ScheduleMode::rcb},
                                                                                {"fixed", ScheduleMode::fixed}};
const std::initializer_list<std::pair<const char*, AllocationMode>> kAllocations = {
    {"affine", AllocationMode::affine}, {"water_filling", AllocationMode::water_filling}, {"none", AllocationMode::none}};
const std::initializer_list<std::pair<const char*, IntrinsicSource>> kSources = {
    {"successor_distance", IntrinsicSource::successor_distance}, {"uniform_noise", IntrinsicSource::uniform_noise}};
const std::initializer_list<std::pair<const char*, PreyPolicy>> kPrey = {{"evasive", PreyPolicy::evasive},
                                                                         {"stationary", PreyPolicy::stationary}};

struct Field {
  std::string key;
  bool required;
  std::function<void(RunConfig&, const std::string&, const std::string&)> apply;
  std::function<std::string(const RunConfig&)> read;
};

Field real(std::string key, double TrainerConfig::*member) {
  return {key, false,
          [member](RunConfig& c, const std::string& v, const std::string& k) { c.trainer.*member = parse_double(v, k); },
          [member](const RunConfig& c) { return format_double(c.trainer.*member); }};
}

template <typename Sub>
Field real_in(std::string key, Sub TrainerConfig::*outer, double Sub::*member) {
  return {key, false,
          [outer, member](RunConfig& c, const std::string& v, const std::string& k) {
            (c.trainer.*outer).*member = parse_double(v, k);
          },
          [outer, member](const RunConfig& c) { return format_double((c.trainer.*outer).*member); }};
}

Field integer(std::string key, int TrainerConfig::*member) {
  return {key, false,
          [member](RunConfig& c, const std::string& v, const std::string& k) {
            c.trainer.*member = static_cast<int>(parse_int(v, k));
          },
          [member](const RunConfig& c) { return std::to_string(c.trainer.*member); }};
}

template <typename Sub>
Field int_in_env(std::string key, Sub EnvConfig::*outer, int Sub::*member) {
  return {key, false,
          [outer, member](RunConfig& c, const std::string& v, const std::string& k) {
            (c.trainer.env.*outer).*member = static_cast<int>(parse_int(v, k));
          },
          [outer, member](const RunConfig& c) { return std::to_string((c.trainer.env.*outer).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"run.label", false, [](RunConfig& c, const std::string& v, const std::string&) { c.label = v; },
                 [](const RunConfig& c) { return c.label; }});
    f.push_back({"run.seeds", true,
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.seeds.clear();
                   for (const std::string& s : split_list(v)) {
                     const std::int64_t seed = parse_int(s, k);
                     if (seed < 0) throw ConfigError(k, "seeds must be non-negative");
                     c.seeds.push_back(static_cast<std::uint64_t>(seed));
                   }
                   if (c.seeds.empty()) throw ConfigError(k, "at least one seed is required");
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::uint64_t s : c.seeds) out += (out.empty() ? "" : ", ") + std::to_string(s);
                   return out;
                 }});
    f.push_back({"run.output_dir", false,
                 [](RunConfig& c, const std::string& v, const std::string&) { c.output_dir = v; },
                 [](const RunConfig& c) { return c.output_dir; }});

    f.push_back(real_in("rcb.beta_min", &TrainerConfig::rcb, &RcbParams::beta_min));
    f.push_back(real_in("rcb.beta_max", &TrainerConfig::rcb, &RcbParams::beta_max));
    f.push_back(real_in("rcb.kappa", &TrainerConfig::rcb, &RcbParams::kappa));
    f.push_back(real_in("rcb.r_target", &TrainerConfig::rcb, &RcbParams::r_target));
    f.push_back(real_in("rcb.alpha_r", &TrainerConfig::rcb, &RcbParams::alpha_r));
    f.push_back({"rcb.schedule", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.trainer.schedule = parse_enum(v, k, kSchedules);
                 },
                 [](const RunConfig& c) { return enum_name(c.trainer.schedule, kSchedules); }});
    f.push_back(real("rcb.fixed_beta", &TrainerConfig::fixed_beta));

    f.push_back(real_in("rsq.lambda", &TrainerConfig::rsq, &RsqParams::lambda));
    f.push_back(real_in("rsq.rsq_ref", &TrainerConfig::rsq, &RsqParams::rsq_ref));
    f.push_back(real_in("rsq.h_min", &TrainerConfig::rsq, &RsqParams::h_min));
    f.push_back(real_in("rsq.h_max", &TrainerConfig::rsq, &RsqParams::h_max));
    f.push_back(real_in("rsq.epsilon", &TrainerConfig::rsq, &RsqParams::epsilon));
    f.push_back(real("rsq.alpha", &TrainerConfig::stats_alpha));
    f.push_back({"rsq.allocation", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.trainer.allocation = parse_enum(v, k, kAllocations);
                 },
                 [](const RunConfig& c) { return enum_name(c.trainer.allocation, kAllocations); }});
    f.push_back({"rsq.stats_on_scaled", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.trainer.stats_on_scaled = parse_bool(v, k);
                 },
                 [](const RunConfig& c) { return std::string(c.trainer.stats_on_scaled ? "true" : "false"); }});

    f.push_back(real_in("sd.gamma", &TrainerConfig::sd, &SdConfig::gamma_sd));
    f.push_back({"sd.refresh_interval", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   c.trainer.sd.refresh_interval = static_cast<int>(parse_int(v, k));
                 },
                 [](const RunConfig& c) { return std::to_string(c.trainer.sd.refresh_interval); }});
    f.push_back(real_in("sd.smoothing", &TrainerConfig::sd, &SdConfig::smoothing));
    f.push_back({"sd.unreachable_cap", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) {
                   if (v == "auto") {
                     c.trainer.sd.unreachable_cap.reset();
                   } else {
                     c.trainer.sd.unreachable_cap = parse_double(v, k);
                   }
                 },
                 [](const RunConfig& c) {
                   return c.trainer.sd.unreachable_cap ? format_double(*c.trainer.sd.unreachable_cap) : std::string("auto");
                 }});
    f.push_back({"sd.source", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) { c.trainer.sd.source = parse_enum(v, k, kSources); },
                 [](const RunConfig& c) { return enum_name(c.trainer.sd.source, kSources); }});
    f.push_back(real_in("sd.noise_offset", &TrainerConfig::sd, &SdConfig::noise_offset));
    f.push_back(real_in("sd.noise_scale", &TrainerConfig::sd, &SdConfig::noise_scale));

    f.push_back({"env.kind", true,
                 [](RunConfig& c, const std::string& v, const std::string& k) { c.trainer.env.kind = parse_enum(v, k, kEnvKinds); },
                 [](const RunConfig& c) { return enum_name(c.trainer.env.kind, kEnvKinds); }});
    f.push_back(int_in_env("env.corridor.width", &EnvConfig::corridor, &CorridorConfig::width));
    f.push_back(int_in_env("env.corridor.height", &EnvConfig::corridor, &CorridorConfig::height));
    f.push_back(int_in_env("env.corridor.gap_width", &EnvConfig::corridor, &CorridorConfig::gap_width));
    f.push_back(int_in_env("env.corridor.max_steps", &EnvConfig::corridor, &CorridorConfig::max_steps));
    f.push_back(int_in_env("env.tag.width", &EnvConfig::tag, &TagConfig::width));
    f.push_back(int_in_env("env.tag.height", &EnvConfig::tag, &TagConfig::height));
    f.push_back(int_in_env("env.tag.n_predators", &EnvConfig::tag, &TagConfig::n_predators));
    f.push_back(int_in_env("env.tag.capture_radius", &EnvConfig::tag, &TagConfig::capture_radius));
    f.push_back(int_in_env("env.tag.max_steps", &EnvConfig::tag, &TagConfig::max_steps));
    f.push_back({"env.tag.prey", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) { c.trainer.env.tag.prey_policy = parse_enum(v, k, kPrey); },
                 [](const RunConfig& c) { return enum_name(c.trainer.env.tag.prey_policy, kPrey); }});

    f.push_back(integer("trainer.n_envs", &TrainerConfig::n_envs));
    f.push_back(integer("trainer.n_steps", &TrainerConfig::n_steps));
    f.push_back(real("trainer.gamma", &TrainerConfig::gamma));
    f.push_back(real("trainer.gae_lambda", &TrainerConfig::gae_lambda));
    f.push_back(real("trainer.clip_ratio", &TrainerConfig::clip_ratio));
    f.push_back(real("trainer.learning_rate", &TrainerConfig::learning_rate));
    f.push_back(real("trainer.value_learning_rate", &TrainerConfig::value_learning_rate));
    f.push_back(integer("trainer.update_epochs", &TrainerConfig::update_epochs));
    f.push_back(real("trainer.intrinsic_scale", &TrainerConfig::intrinsic_scale));
    f.push_back(integer("trainer.total_iterations", &TrainerConfig::total_iterations));
    f.push_back(integer("trainer.final_window", &TrainerConfig::final_window));

    f.push_back({"debug.trajectories", false,
                 [](RunConfig& c, const std::string& v, const std::string& k) { c.dump_trajectories = parse_bool(v, k); },
                 [](const RunConfig& c) { return std::string(c.dump_trajectories ? "true" : "false"); }});
    return f;
  }();
  return table;
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

double parse_double(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* begin = t.data();
  if (!t.empty() && t.front() == '+') ++begin;
  const auto result = std::from_chars(begin, t.data() + t.size(), value);
  if (t.empty() || result.ec != std::errc() || result.ptr != t.data() + t.size()) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  return value;
}

std::int64_t parse_int(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  std::int64_t value = 0;
  const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || result.ec != std::errc() || result.ptr != t.data() + t.size()) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return value;
}

KeyValues parse_key_values(std::istream& in, const std::string& origin) {
  KeyValues values;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("", where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (values.count(key) != 0) throw ConfigError(key, where + ": duplicate key");
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  return parse_key_values(in, path);
}

void write_key_values(std::ostream& out, const KeyValues& values) {
  for (const auto& [key, value] : values) out << key << " = " << value << '\n';
}

void apply_overrides(KeyValues& values, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("", "override '" + o + "' is not key=value");
    values[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
}

RunConfig resolve_run_config(const KeyValues& values) {
  const auto& table = fields();
  for (const auto& [key, value] : values) {
    const bool known = std::any_of(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (!known) throw ConfigError(key, "unknown configuration key");
  }
  RunConfig config;
  for (const Field& field : table) {
    const auto it = values.find(field.key);
    if (it == values.end()) {
      if (field.required) throw ConfigError(field.key, "required key is missing");
      continue;
    }
    field.apply(config, it->second, field.key);
  }
  try {
    config.trainer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", e.what());
  }
  return config;
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues values;
  for (const Field& field : fields()) values[field.key] = field.read(config);
  return values;
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const Field& field : fields()) keys.push_back(field.key);
  return keys;
}

std::string output_root(const RunConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return env;
  return "runs";
}

SweepSpec parse_sweep_spec(const KeyValues& values) {
  SweepSpec spec;
  spec.base = values;
  const auto take = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = spec.base.find(key);
    if (it == spec.base.end()) return std::nullopt;
    std::string v = it->second;
    spec.base.erase(it);
    return v;
  };
  const auto parameter = take("sweep.parameter");
  const auto list = take("sweep.values");
  const auto cap = take("sweep.max_cells");
  if (!parameter) throw ConfigError("sweep.parameter", "required key is missing");
  if (!list) throw ConfigError("sweep.values", "required key is missing");
  spec.parameter = *parameter;
  spec.values = split_list(*list);
  if (spec.values.empty()) throw ConfigError("sweep.values", "value list is empty");
  if (cap) spec.max_cells = static_cast<int>(parse_int(*cap, "sweep.max_cells"));
  const auto known = known_config_keys();
  if (std::find(known.begin(), known.end(), spec.parameter) == known.end()) {
    throw ConfigError("sweep.parameter", "unknown configuration key '" + spec.parameter + "'");
  }
  if (static_cast<int>(spec.values.size()) > spec.max_cells) {
    throw ConfigError("sweep.values", "sweep has " + std::to_string(spec.values.size()) + " cells, cap is " +
                                          std::to_string(spec.max_cells));
  }
  return spec;
}

}  // namespace qex
