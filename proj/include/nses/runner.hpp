#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nses/config.hpp"
#include "nses/objective.hpp"
#include "nses/search.hpp"

namespace nses {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> output_dir;
  bool record = false;
  bool resume = false;
  std::size_t checkpoint_every = 10;
  // Stop after this many generations (counted from the start of the run)
  // without writing summary.json, as if the process had been killed.
  std::optional<std::size_t> stop_after;
};

struct RunSummary {
  double best_mean_reward = -std::numeric_limits<double>::infinity();
  std::size_t generations = 0;
  double wall_seconds = 0.0;
  std::size_t best_agent = 0;
  std::size_t best_generation = 0;
  fs::path directory;
  bool complete = false;
};

namespace run_files {
inline constexpr const char* config = "config.ini";
inline constexpr const char* generations = "generations.csv";
inline constexpr const char* lineage = "lineage.jsonl";
inline constexpr const char* archive = "archive.jsonl";
inline constexpr const char* best_policy = "best_policy.bin";
inline constexpr const char* checkpoint = "checkpoint.json";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* overhead = "overhead.csv";
inline constexpr const char* trajectories = "trajectories";
}  // namespace run_files

namespace detail {

inline std::string csv_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON has no infinities; -inf (no value yet) is stored as null.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double from_finite_or_null(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json to_json(const AdamState& s) {
  return {{"alpha", s.config.alpha},           {"beta1", s.config.beta1},
          {"beta2", s.config.beta2},           {"epsilon", s.config.epsilon},
          {"m", s.first_moment},               {"v", s.second_moment},
          {"step", s.step_count}};
}

inline AdamState adam_from_json(const json& j) {
  AdamState s;
  s.config = AdamConfig{j.at("alpha").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
                        j.at("epsilon").get<double>()};
  s.first_moment = j.at("m").get<std::vector<double>>();
  s.second_moment = j.at("v").get<std::vector<double>>();
  s.step_count = j.at("step").get<decltype(s.step_count)>();
  return s;
}

inline json to_json(const SearchState& s) {
  json agents = json::array();
  for (const Agent& a : s.agents) {
    agents.push_back({{"id", a.id},
                      {"theta", a.theta.values()},
                      {"adam", to_json(a.adam)},
                      {"behavior", nses::to_json(a.behavior)},
                      {"needs_evaluation", a.needs_evaluation}});
  }
  json archive = nullptr;
  if (s.archive) {
    json entries = json::array();
    for (const auto& e : s.archive->entries()) entries.push_back(nses::to_json(e));
    archive = {{"kind", to_string(s.archive->kind())}, {"k", s.archive->k()}, {"entries", entries}};
  }
  return {{"generation", s.generation},
          {"agents", agents},
          {"archive", archive},
          {"controller",
           {{"w", s.controller.w},
            {"t_w", s.controller.t_w},
            {"delta_w", s.controller.delta_w},
            {"f_best", finite_or_null(s.controller.f_best)},
            {"t_best", s.controller.t_best}}},
          {"best",
           {{"theta", s.best.theta.values()},
            {"mean_reward", finite_or_null(s.best.mean_reward)},
            {"agent_id", s.best.agent_id},
            {"generation", s.best.generation}}}};
}

inline SearchState search_state_from_json(const json& j, BehaviorKind kind) {
  SearchState s;
  s.generation = j.at("generation").get<std::size_t>();
  for (const auto& ja : j.at("agents")) {
    Agent a;
    a.id = ja.at("id").get<std::size_t>();
    a.theta = ParameterVector(ja.at("theta").get<std::vector<double>>());
    a.adam = adam_from_json(ja.at("adam"));
    a.behavior = behavior_from_json(kind, ja.at("behavior"));
    a.needs_evaluation = ja.at("needs_evaluation").get<bool>();
    s.agents.push_back(std::move(a));
  }
  const json& ja = j.at("archive");
  if (!ja.is_null()) {
    Archive archive(behavior_kind_from_string(ja.at("kind").get<std::string>()), ja.at("k").get<std::size_t>());
    for (const auto& e : ja.at("entries")) archive.add(behavior_from_json(archive.kind(), e));
    s.archive = std::move(archive);
  }
  const json& jc = j.at("controller");
  s.controller = WeightController{jc.at("w").get<double>(), jc.at("t_w").get<std::size_t>(),
                                  jc.at("delta_w").get<double>(), from_finite_or_null(jc.at("f_best")),
                                  jc.at("t_best").get<std::size_t>()};
  const json& jb = j.at("best");
  s.best.theta = ParameterVector(jb.at("theta").get<std::vector<double>>());
  s.best.mean_reward = from_finite_or_null(jb.at("mean_reward"));
  s.best.agent_id = jb.at("agent_id").get<std::size_t>();
  s.best.generation = jb.at("generation").get<std::size_t>();
  return s;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Keeps the lines of a log whose generation is <= last_generation.
// `header_lines` leading lines are always kept.
template <class GenOf>
void truncate_log(const fs::path& path, std::size_t header_lines, std::size_t last_generation, GenOf gen_of) {
  std::istringstream in(read_text(path));
  std::string out;
  std::string line;
  for (std::size_t i = 0; std::getline(in, line); ++i) {
    if (line.empty()) continue;
    if (i < header_lines || gen_of(line) <= last_generation) out += line + "\n";
  }
  write_text_atomic(path, out);
}

inline const char* generations_header =
    "gen,agent_id,mean_fitness,max_fitness,best_so_far,novelty_of_theta,w,selected_agent,archive_size,"
    "novelty_of_selected\n";

inline std::string generation_row(const GenerationStats& s, bool novelty_on) {
  std::string row = std::to_string(s.generation) + "," + std::to_string(s.agent_id) + "," +
                    csv_double(s.mean_fitness) + "," + csv_double(s.max_fitness) + "," +
                    csv_double(std::isfinite(s.best_so_far) ? s.best_so_far : std::nan("")) + "," +
                    csv_double(s.novelty_of_theta) + "," + csv_double(s.w) + "," + std::to_string(s.agent_id) + "," +
                    (novelty_on ? std::to_string(s.archive_size) : std::string()) + "," +
                    csv_double(s.novelty_of_selected) + "\n";
  return row;
}

inline std::string lineage_row(std::size_t gen, std::size_t agent_id, const BehaviorDescriptor& b) {
  return json{{"gen", gen}, {"agent_id", agent_id}, {"behavior", nses::to_json(b)}}.dump() + "\n";
}

inline MlpSpec policy_spec_for(const RunConfig& config, std::size_t in, std::size_t out, OutputSquash squash) {
  return MlpSpec{in, out, config.hidden, config.activation, squash};
}

inline void append(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << text;
}

inline void record_walker(const PolicyObjective<Walker>& objective, const ParameterVector& theta,
                          std::uint64_t seed, const fs::path& path) {
  MlpEvaluator policy(objective.spec(), theta.view());
  WalkerTrace trace;
  objective.env().rollout(policy, seed, &trace);
  std::string out = "step,x,y,reward\n";
  out += "0,0,0,0\n";
  for (std::size_t t = 0; t < trace.positions.size(); ++t) {
    out += std::to_string(t + 1) + "," + csv_double(trace.positions[t].x) + "," + csv_double(trace.positions[t].y) +
           "," + csv_double(trace.rewards[t]) + "\n";
  }
  write_text_atomic(path, out);
}

inline void record_gridworld(const PolicyObjective<Gridworld>& objective, const ParameterVector& theta,
                             std::uint64_t seed, const fs::path& path) {
  const EpisodeResult r = objective.evaluate(theta.view(), seed);
  const Cell start = objective.env().config().map.start();
  std::string out = "step,x,y,reward\n";
  out += "0," + std::to_string(start.col) + "," + std::to_string(start.row) + ",0\n";
  for (std::size_t t = 0; t < r.behavior.steps(); ++t) {
    const auto s = r.behavior.state(t);
    const bool last = t + 1 == r.behavior.steps();
    out += std::to_string(t + 1) + "," + csv_double(s[1]) + "," + csv_double(s[0]) + "," +
           csv_double(last ? r.total_reward : 0.0) + "\n";
  }
  write_text_atomic(path, out);
}

template <class O>
void record_trajectory(const O& objective, const ParameterVector& theta, std::uint64_t seed, const fs::path& path) {
  if constexpr (std::is_same_v<O, PolicyObjective<Walker>>) {
    record_walker(objective, theta, seed, path);
  } else {
    record_gridworld(objective, theta, seed, path);
  }
}

template <class O>
RunSummary run_search(const RunConfig& config, const O& objective, const MlpSpec& spec, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = config.output_dir;
  const SearchParams params = config.search_params();
  const bool novelty_on = uses_novelty(config.algorithm);
  const NoiseTable table(config.hyper.noise_seed, config.hyper.noise_table_size);

  const fs::path gen_log = dir / run_files::generations;
  const fs::path lineage_log = dir / run_files::lineage;
  const fs::path checkpoint = dir / run_files::checkpoint;

  std::optional<Search<O>> search;
  if (options.resume && fs::exists(checkpoint)) {
    RunConfig saved = load_config((dir / run_files::config).string(), false);
    saved.workers = config.workers;
    saved.output_dir = config.output_dir;
    if (!(saved == config)) throw ConfigError("resume: config differs from the one in " + dir.string());
    SearchState state =
        search_state_from_json(json::parse(read_text(checkpoint)), objective.behavior_kind());
    const std::size_t g = state.generation;
    truncate_log(gen_log, 1, g, [](const std::string& line) { return std::stoul(line.substr(0, line.find(','))); });
    truncate_log(lineage_log, 0, g,
                 [](const std::string& line) { return json::parse(line).at("gen").get<std::size_t>(); });
    search.emplace(objective, params, table, std::move(state));
  } else {
    fs::create_directories(dir);
    for (const char* f : {run_files::summary, run_files::checkpoint, run_files::archive}) fs::remove(dir / f);
    write_text_atomic(dir / run_files::config, serialize_config(config));
    write_text_atomic(gen_log, generations_header);
    search.emplace(objective, params, table);
    std::string seeds;
    for (const Agent& a : search->state().agents) seeds += lineage_row(0, a.id, a.behavior);
    write_text_atomic(lineage_log, seeds);
  }

  auto save_checkpoint = [&] {
    write_text_atomic(checkpoint, to_json(search->state()).dump());
    const BestPolicy& best = search->state().best;
    if (best.valid()) save_parameters(dir / run_files::best_policy, spec, best.theta);
  };

  const std::size_t T = config.hyper.generations;
  while (search->state().generation < T) {
    if (options.stop_after && search->state().generation >= *options.stop_after) {
      RunSummary partial;
      partial.generations = search->state().generation;
      partial.best_mean_reward = search->state().best.mean_reward;
      partial.directory = dir;
      return partial;
    }
    const GenerationStats stats = search->step();
    append(gen_log, generation_row(stats, novelty_on));
    append(lineage_log, lineage_row(stats.generation, stats.agent_id, stats.behavior));
    if (options.checkpoint_every > 0 && stats.generation % options.checkpoint_every == 0) save_checkpoint();
  }
  search->finish();
  save_checkpoint();

  const SearchState& state = search->state();
  if (state.archive) save_archive(dir / run_files::archive, *state.archive);

  if (options.record) {
    const fs::path tdir = dir / run_files::trajectories;
    fs::create_directories(tdir);
    for (const Agent& a : state.agents) {
      const std::uint64_t seed = derive_seed({config.run_seed, stream::behavior, state.generation, a.id});
      record_trajectory(objective, a.theta, seed, tdir / ("agent_" + std::to_string(a.id) + ".csv"));
    }
    const std::uint64_t seed =
        derive_seed({config.run_seed, stream::behavior, state.best.generation, state.best.agent_id});
    record_trajectory(objective, state.best.theta, seed, tdir / "best.csv");
  }

  RunSummary summary;
  summary.best_mean_reward = state.best.mean_reward;
  summary.generations = state.generation;
  summary.best_agent = state.best.agent_id;
  summary.best_generation = state.best.generation;
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary.directory = dir;
  summary.complete = true;

  json j = {{"best_mean_reward", finite_or_null(summary.best_mean_reward)},
            {"generations", summary.generations},
            {"wall_seconds", summary.wall_seconds},
            {"algorithm", to_string(config.algorithm)},
            {"env", to_string(config.env)},
            {"seed", config.run_seed},
            {"best_agent", summary.best_agent},
            {"best_generation", summary.best_generation},
            {"final_w", search->current_w()},
            {"archive_size", state.archive ? state.archive->size() : 0}};
  write_text_atomic(dir / run_files::summary, j.dump(2) + "\n");
  return summary;
}

}  // namespace detail

/// Applies CLI overrides to a loaded config.
inline RunConfig apply_overrides(RunConfig config, const RunOptions& options) {
  if (options.seed) config.run_seed = *options.seed;
  if (options.workers) config.workers = *options.workers;
  if (options.output_dir) config.output_dir = *options.output_dir;
  config.validate();
  return config;
}

/// Runs T generations and writes the run directory:
///   config.ini       full config snapshot
///   generations.csv  one row per generation
///   lineage.jsonl    behavior of every agent at gen 0, then of the updated agent per generation
///   archive.jsonl    final novelty archive (novelty algorithms only)
///   best_policy.bin  best theta found
///   checkpoint.json  state at the last checkpoint
///   summary.json     best_mean_reward, generations, wall_seconds, ...
inline RunSummary run(const RunConfig& base, const RunOptions& options = {}) {
  const RunConfig config = apply_overrides(base, options);
  if (config.env == EnvKind::gridworld) {
    const MlpSpec spec = detail::policy_spec_for(config, Gridworld::observation_dim, Gridworld::action_dim,
                                                 OutputSquash::none);
    const PolicyObjective<Gridworld> objective(Gridworld(config.gridworld()), spec);
    return detail::run_search(config, objective, spec, options);
  }
  const MlpSpec spec =
      detail::policy_spec_for(config, Walker::observation_dim, Walker::action_dim, OutputSquash::tanh);
  const PolicyObjective<Walker> objective(Walker(config.walker_for_env()), spec);
  return detail::run_search(config, objective, spec, options);
}

/// Writes <run_dir>/overhead.csv with columns gen, agent_id, x, y: the final
/// position of every agent at gen 0 and of the updated agent each generation.
inline fs::path export_overhead(const fs::path& run_dir) {
  const RunConfig config = load_config((run_dir / run_files::config).string(), false);
  if (config.env == EnvKind::gridworld) {
    throw std::runtime_error("export-overhead: " + std::string(to_string(config.env)) +
                             " has trajectory behaviors, not 2-D final positions");
  }
  std::istringstream in(detail::read_text(run_dir / run_files::lineage));
  std::string out = "gen,agent_id,x,y\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto b = behavior_from_json(BehaviorKind::final_position, j.at("behavior"));
    out += std::to_string(j.at("gen").get<std::size_t>()) + "," + std::to_string(j.at("agent_id").get<std::size_t>()) +
           "," + detail::csv_double(b.data()[0]) + "," + detail::csv_double(b.data()[1]) + "\n";
  }
  const fs::path path = run_dir / run_files::overhead;
  detail::write_text_atomic(path, out);
  return path;
}

// ---------------------------------------------------------------------------
// compare

inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

/// Linear-interpolation quantile of sorted values, q in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct MedianCi {
  double median = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// Median with a percentile bootstrap confidence interval.
inline MedianCi bootstrap_median_ci(const std::vector<double>& values, std::size_t resamples = 1000,
                                    double confidence = 0.95, std::uint64_t seed = 0) {
  if (values.empty()) throw std::invalid_argument("bootstrap of empty set");
  SeededRng rng(seed, stream::bootstrap);
  std::vector<double> medians(resamples);
  std::vector<double> sample(values.size());
  for (double& m : medians) {
    for (double& s : sample) s = values[rng.uniform_index(values.size())];
    m = median(sample);
  }
  std::sort(medians.begin(), medians.end());
  const double tail = (1.0 - confidence) / 2.0;
  return {median(values), quantile_sorted(medians, tail), quantile_sorted(medians, 1.0 - tail)};
}

struct CompareRow {
  std::string algorithm;
  std::string env;
  std::vector<double> rewards;
  std::vector<fs::path> absent;  // run directories without a finished summary
  std::optional<MedianCi> stats;
};

/// Groups run directories by (algorithm, env). Each argument is either a run
/// directory or a directory whose subdirectories are runs.
inline std::vector<CompareRow> compare(const std::vector<fs::path>& dirs, std::size_t resamples = 1000,
                                       std::uint64_t seed = 0) {
  std::vector<fs::path> runs;
  for (const fs::path& d : dirs) {
    if (!fs::is_directory(d)) throw std::runtime_error("compare: not a directory: " + d.string());
    if (fs::exists(d / run_files::config)) {
      runs.push_back(d);
      continue;
    }
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(d)) {
      if (e.is_directory() && fs::exists(e.path() / run_files::config)) children.push_back(e.path());
    }
    if (children.empty()) throw std::runtime_error("compare: no runs under " + d.string());
    std::sort(children.begin(), children.end());
    runs.insert(runs.end(), children.begin(), children.end());
  }

  std::map<std::pair<std::string, std::string>, CompareRow> cells;
  for (const fs::path& r : runs) {
    const RunConfig config = load_config((r / run_files::config).string(), false);
    const std::pair key{std::string(to_string(config.algorithm)), std::string(to_string(config.env))};
    CompareRow& row = cells[key];
    row.algorithm = key.first;
    row.env = key.second;
    const fs::path summary = r / run_files::summary;
    if (!fs::exists(summary)) {
      row.absent.push_back(r);
      continue;
    }
    const json j = json::parse(detail::read_text(summary));
    if (j.at("best_mean_reward").is_null()) {
      row.absent.push_back(r);
      continue;
    }
    row.rewards.push_back(j.at("best_mean_reward").get<double>());
  }
  std::vector<CompareRow> out;
  for (auto& [key, row] : cells) {
    if (!row.rewards.empty()) row.stats = bootstrap_median_ci(row.rewards, resamples, 0.95, seed);
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string format_compare(const std::vector<CompareRow>& rows) {
  std::string out = "algorithm,env,runs,absent,median,ci_low,ci_high\n";
  for (const auto& r : rows) {
    out += r.algorithm + "," + r.env + "," + std::to_string(r.rewards.size()) + "," + std::to_string(r.absent.size());
    if (r.stats) {
      out += "," + detail::csv_double(r.stats->median) + "," + detail::csv_double(r.stats->low) + "," +
             detail::csv_double(r.stats->high);
    } else {
      out += ",,,";
    }
    out += "\n";
  }
  for (const auto& r : rows) {
    for (const auto& a : r.absent) out += "absent: " + a.string() + "\n";
  }
  return out;
}

}  // namespace nses
