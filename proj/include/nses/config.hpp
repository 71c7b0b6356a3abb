#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nses/es.hpp"
#include "nses/gridworld.hpp"
#include "nses/policy.hpp"
#include "nses/search.hpp"
#include "nses/walker.hpp"

namespace nses {

/// Bad or unknown configuration. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { trap_walker, isotropic_walker, gridworld };

inline const char* to_string(EnvKind e) {
  switch (e) {
    case EnvKind::trap_walker: return "trap-walker";
    case EnvKind::isotropic_walker: return "isotropic-walker";
    case EnvKind::gridworld: return "gridworld";
  }
  return "?";
}

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "trap-walker") return EnvKind::trap_walker;
  if (s == "isotropic-walker") return EnvKind::isotropic_walker;
  if (s == "gridworld") return EnvKind::gridworld;
  throw ConfigError("unknown env: " + s);
}

struct HyperConfig {
  std::size_t n = 200;
  double sigma = 0.02;
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t M = 5;
  std::size_t k = 10;
  std::size_t generations = 300;  // T
  double initial_w = 1.0;
  std::size_t t_w = 50;
  double delta_w = 0.05;
  bool mirrored = false;
  double archive_probability = 1.0;
  std::size_t eval_episodes = 30;
  std::size_t eval_every = 10;
  double l2_coeff = 0.0;
  std::size_t noise_table_size = NoiseTable::default_size;
  std::uint64_t noise_seed = 12345;

  bool operator==(const HyperConfig&) const = default;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::es;
  std::uint64_t run_seed = 0;
  std::size_t workers = 0;  // 0: one per hardware thread
  std::string output_dir = "run";

  EnvKind env = EnvKind::trap_walker;
  WalkerConfig walker = WalkerConfig::trap_walker();
  std::string grid_map = "default";  // "default" or a path to a map file
  std::size_t grid_max_steps = 40;
  double grid_decoy_value = 1.0;
  double grid_goal_value = 10.0;
  double grid_obs_noise_std = 0.0;

  std::vector<std::size_t> hidden = {16, 16};
  Activation activation = Activation::tanh;

  HyperConfig hyper;

  bool operator==(const RunConfig& o) const {
    return algorithm == o.algorithm && run_seed == o.run_seed && workers == o.workers &&
           output_dir == o.output_dir && env == o.env && walker_equal(walker, o.walker) &&
           grid_map == o.grid_map && grid_max_steps == o.grid_max_steps &&
           grid_decoy_value == o.grid_decoy_value && grid_goal_value == o.grid_goal_value &&
           grid_obs_noise_std == o.grid_obs_noise_std && hidden == o.hidden &&
           activation == o.activation && hyper == o.hyper;
  }

  GridworldConfig gridworld() const {
    GridworldConfig g;
    if (grid_map != "default") g.map = GridMap::load(grid_map);
    g.max_steps = grid_max_steps;
    g.decoy_value = grid_decoy_value;
    g.goal_value = grid_goal_value;
    g.obs_noise_std = grid_obs_noise_std;
    return g;
  }

  /// The walker config with the layout and reward implied by `env`.
  WalkerConfig walker_for_env() const {
    WalkerConfig w = walker;
    w.trap = env == EnvKind::trap_walker;
    w.reward = env == EnvKind::trap_walker ? WalkerReward::forward : WalkerReward::isotropic;
    return w;
  }

  SearchParams search_params() const {
    SearchParams p;
    p.algorithm = algorithm;
    p.population = hyper.n;
    p.sigma = hyper.sigma;
    p.adam = AdamConfig{hyper.alpha, hyper.beta1, hyper.beta2, hyper.adam_epsilon};
    p.meta_population = hyper.M;
    p.k = hyper.k;
    p.initial_w = hyper.initial_w;
    p.t_w = hyper.t_w;
    p.delta_w = hyper.delta_w;
    p.mirrored = hyper.mirrored;
    p.archive_probability = hyper.archive_probability;
    p.eval_episodes = hyper.eval_episodes;
    p.eval_every = hyper.eval_every;
    p.l2_coeff = hyper.l2_coeff;
    p.run_seed = run_seed;
    p.batch.workers = workers == 0 ? default_worker_count() : workers;
    return p;
  }

  /// Throws ConfigError naming the first invalid field.
  void validate() const {
    try {
      search_params().validate();
      if (env == EnvKind::gridworld) {
        gridworld().validate();
      } else {
        walker_for_env().validate();
      }
      MlpSpec{1, 1, hidden, activation, OutputSquash::none}.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid config: ") + e.what());
    }
    if (hyper.noise_table_size == 0) throw ConfigError("invalid config: noise_table_size must be positive");
    if (output_dir.empty()) throw ConfigError("invalid config: output_dir is empty");
  }

 private:
  static bool walker_equal(const WalkerConfig& a, const WalkerConfig& b) {
    return a.trap_x == b.trap_x && a.trap_half_width == b.trap_half_width &&
           a.trap_depth == b.trap_depth && a.step_force_limit == b.step_force_limit &&
           a.drag == b.drag && a.dt == b.dt && a.max_steps == b.max_steps &&
           a.obs_noise_std == b.obs_noise_std && a.energy_cost == b.energy_cost;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) throw ConfigError("config key '" + key + "': bad value '" + text + "'");
  return value;
}

inline double parse_double(const std::string& key, const std::string& text) {
  // from_chars for double is not available in every libstdc++ we target.
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ConfigError("config key '" + key + "': bad number '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

struct KeySpec {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
KeySpec size_key(std::string section, std::string key, T RunConfig::*outer_member) = delete;

inline std::vector<KeySpec> config_keys() {
  std::vector<KeySpec> keys;
  auto add_size = [&](std::string sec, std::string key, auto getter) {
    const std::string name = sec + "." + key;
    keys.push_back({sec, key, [getter](const RunConfig& c) { return std::to_string(getter(const_cast<RunConfig&>(c))); },
                    [getter, name](RunConfig& c, const std::string& v) {
                      getter(c) = parse_number<std::size_t>(name, v);
                    }});
  };
  auto add_double = [&](std::string sec, std::string key, auto getter) {
    const std::string name = sec + "." + key;
    keys.push_back({sec, key, [getter](const RunConfig& c) { return format_double(getter(const_cast<RunConfig&>(c))); },
                    [getter, name](RunConfig& c, const std::string& v) { getter(c) = parse_double(name, v); }});
  };

  keys.push_back({"run", "algorithm", [](const RunConfig& c) { return std::string(to_string(c.algorithm)); },
                  [](RunConfig& c, const std::string& v) {
                    try {
                      c.algorithm = algorithm_from_string(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                    }
                  }});
  keys.push_back({"run", "seed", [](const RunConfig& c) { return std::to_string(c.run_seed); },
                  [](RunConfig& c, const std::string& v) { c.run_seed = parse_number<std::uint64_t>("run.seed", v); }});
  add_size("run", "workers", [](RunConfig& c) -> std::size_t& { return c.workers; });
  keys.push_back({"run", "output_dir", [](const RunConfig& c) { return c.output_dir; },
                  [](RunConfig& c, const std::string& v) { c.output_dir = v; }});

  keys.push_back({"env", "name", [](const RunConfig& c) { return std::string(to_string(c.env)); },
                  [](RunConfig& c, const std::string& v) { c.env = env_kind_from_string(v); }});

  add_double("walker", "trap_x", [](RunConfig& c) -> double& { return c.walker.trap_x; });
  add_double("walker", "trap_half_width", [](RunConfig& c) -> double& { return c.walker.trap_half_width; });
  add_double("walker", "trap_depth", [](RunConfig& c) -> double& { return c.walker.trap_depth; });
  add_double("walker", "step_force_limit", [](RunConfig& c) -> double& { return c.walker.step_force_limit; });
  add_double("walker", "drag", [](RunConfig& c) -> double& { return c.walker.drag; });
  add_double("walker", "dt", [](RunConfig& c) -> double& { return c.walker.dt; });
  add_size("walker", "max_steps", [](RunConfig& c) -> std::size_t& { return c.walker.max_steps; });
  add_double("walker", "obs_noise_std", [](RunConfig& c) -> double& { return c.walker.obs_noise_std; });
  add_double("walker", "energy_cost", [](RunConfig& c) -> double& { return c.walker.energy_cost; });

  keys.push_back({"gridworld", "map", [](const RunConfig& c) { return c.grid_map; },
                  [](RunConfig& c, const std::string& v) { c.grid_map = v; }});
  add_size("gridworld", "max_steps", [](RunConfig& c) -> std::size_t& { return c.grid_max_steps; });
  add_double("gridworld", "decoy_value", [](RunConfig& c) -> double& { return c.grid_decoy_value; });
  add_double("gridworld", "goal_value", [](RunConfig& c) -> double& { return c.grid_goal_value; });
  add_double("gridworld", "obs_noise_std", [](RunConfig& c) -> double& { return c.grid_obs_noise_std; });

  keys.push_back({"policy", "hidden",
                  [](const RunConfig& c) {
                    std::string s;
                    for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
                    return s;
                  },
                  [](RunConfig& c, const std::string& v) {
                    c.hidden.clear();
                    std::stringstream ss(v);
                    std::string item;
                    while (std::getline(ss, item, ',')) c.hidden.push_back(parse_number<std::size_t>("policy.hidden", item));
                  }});
  keys.push_back({"policy", "activation", [](const RunConfig& c) { return std::string(to_string(c.activation)); },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "tanh") c.activation = Activation::tanh;
                    else if (v == "relu") c.activation = Activation::relu;
                    else throw ConfigError("policy.activation: expected tanh or relu, got '" + v + "'");
                  }});

  add_size("hyper", "n", [](RunConfig& c) -> std::size_t& { return c.hyper.n; });
  add_double("hyper", "sigma", [](RunConfig& c) -> double& { return c.hyper.sigma; });
  add_double("hyper", "alpha", [](RunConfig& c) -> double& { return c.hyper.alpha; });
  add_double("hyper", "beta1", [](RunConfig& c) -> double& { return c.hyper.beta1; });
  add_double("hyper", "beta2", [](RunConfig& c) -> double& { return c.hyper.beta2; });
  add_double("hyper", "adam_epsilon", [](RunConfig& c) -> double& { return c.hyper.adam_epsilon; });
  add_size("hyper", "M", [](RunConfig& c) -> std::size_t& { return c.hyper.M; });
  add_size("hyper", "k", [](RunConfig& c) -> std::size_t& { return c.hyper.k; });
  add_size("hyper", "T", [](RunConfig& c) -> std::size_t& { return c.hyper.generations; });
  add_double("hyper", "initial_w", [](RunConfig& c) -> double& { return c.hyper.initial_w; });
  add_size("hyper", "t_w", [](RunConfig& c) -> std::size_t& { return c.hyper.t_w; });
  add_double("hyper", "delta_w", [](RunConfig& c) -> double& { return c.hyper.delta_w; });
  keys.push_back({"hyper", "mirrored", [](const RunConfig& c) { return std::string(c.hyper.mirrored ? "true" : "false"); },
                  [](RunConfig& c, const std::string& v) { c.hyper.mirrored = parse_bool("hyper.mirrored", v); }});
  add_double("hyper", "archive_probability", [](RunConfig& c) -> double& { return c.hyper.archive_probability; });
  add_size("hyper", "eval_episodes", [](RunConfig& c) -> std::size_t& { return c.hyper.eval_episodes; });
  add_size("hyper", "eval_every", [](RunConfig& c) -> std::size_t& { return c.hyper.eval_every; });
  add_double("hyper", "l2_coeff", [](RunConfig& c) -> double& { return c.hyper.l2_coeff; });
  add_size("hyper", "noise_table_size", [](RunConfig& c) -> std::size_t& { return c.hyper.noise_table_size; });
  keys.push_back({"hyper", "noise_seed", [](const RunConfig& c) { return std::to_string(c.hyper.noise_seed); },
                  [](RunConfig& c, const std::string& v) {
                    c.hyper.noise_seed = parse_number<std::uint64_t>("hyper.noise_seed", v);
                  }});
  return keys;
}

inline std::string env_var_name(const std::string& section, const std::string& key) {
  std::string name = "NSES_" + section + "_" + key;
  for (char& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

}  // namespace detail

/// Parses the sectioned key = value format. Every key is optional and
/// defaults as in RunConfig; unknown sections or keys are errors. Values are
/// then overridden by NSES_<SECTION>_<KEY> environment variables when
/// `environment` is supplied (e.g. NSES_HYPER_SIGMA=0.05).
inline RunConfig parse_config(const std::string& text,
                              const std::function<const char*(const char*)>& environment = nullptr) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }

  const auto keys = detail::config_keys();
  std::map<std::string, const detail::KeySpec*> by_name;
  for (const auto& k : keys) by_name[k.section + "." + k.key] = &k;

  RunConfig config;
  // env.name first: nothing else depends on it today, but a stable order
  // keeps error messages deterministic.
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto it = by_name.find(section + "." + key);
      if (it == by_name.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
      it->second->set(config, value.get_value<std::string>());
    }
  }
  if (environment) {
    for (const auto& k : keys) {
      if (const char* v = environment(detail::env_var_name(k.section, k.key).c_str())) k.set(config, v);
    }
  }
  config.validate();
  return config;
}

inline RunConfig load_config(const std::string& path, bool apply_environment = true) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  if (apply_environment) return parse_config(ss.str(), [](const char* name) { return std::getenv(name); });
  return parse_config(ss.str());
}

/// Writes every key, so a snapshot fully describes the run.
inline std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : detail::config_keys()) {
    if (k.section != section) {
      if (!section.empty()) out += "\n";
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += k.key + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace nses
