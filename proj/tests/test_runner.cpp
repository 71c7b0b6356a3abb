#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "nses/runner.hpp"

using namespace nses;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nses_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

RunConfig tiny(Algorithm a, EnvKind env, const fs::path& dir, std::size_t T = 12) {
  RunConfig c;
  c.algorithm = a;
  c.env = env;
  c.output_dir = dir.string();
  c.workers = 2;
  c.hyper.n = 16;
  c.hyper.M = 3;
  c.hyper.generations = T;
  c.hyper.eval_episodes = 3;
  c.hyper.eval_every = 4;
  c.hyper.t_w = 2;
  c.hyper.noise_table_size = 100000;
  return c;
}

}  // namespace

TEST(Config, DefaultsParseFromEmptyText) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c, RunConfig{});
  EXPECT_EQ(c.hyper.eval_episodes, 30u);
  EXPECT_EQ(c.hyper.eval_every, 10u);
}

TEST(Config, RoundTrip) {
  RunConfig c;
  c.algorithm = Algorithm::nsra_es;
  c.run_seed = 12345678901234ULL;
  c.env = EnvKind::isotropic_walker;
  c.walker.dt = 0.1 + 0.2;
  c.walker.energy_cost = 1.0 / 3.0;
  c.hidden = {8, 4, 2};
  c.activation = Activation::relu;
  c.hyper.sigma = 0.017;
  c.hyper.mirrored = true;
  c.hyper.archive_probability = 0.25;
  c.hyper.t_w = 10;
  c.output_dir = "runs/x y";
  const std::string text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Config, ParsesSectionsAndComments) {
  const RunConfig c = parse_config(
      "; comment\n[run]\nalgorithm = ns-es\nseed = 4\n\n[env]\nname = gridworld\n[hyper]\nM = 7\nT = 3\n");
  EXPECT_EQ(c.algorithm, Algorithm::ns_es);
  EXPECT_EQ(c.run_seed, 4u);
  EXPECT_EQ(c.env, EnvKind::gridworld);
  EXPECT_EQ(c.hyper.M, 7u);
  EXPECT_EQ(c.hyper.generations, 3u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("[hyper]\nsigmaa = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyperz]\nsigma = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyper]\nsigma = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyper]\nsigma = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyper]\nn = 12x\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyper]\nn = 3\nn = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nalgorithm = cma\n"), ConfigError);
  EXPECT_THROW(parse_config("[env]\nname = humanoid\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyper]\nmirrored = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("[walker]\ndrag = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[hyper]\nmirrored = true\nn = 7\n"), ConfigError);
  EXPECT_THROW(parse_config("[section\n"), ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  const auto env = [](const char* name) -> const char* {
    const std::string n = name;
    if (n == "NSES_HYPER_SIGMA") return "0.5";
    if (n == "NSES_RUN_ALGORITHM") return "nsr-es";
    if (n == "NSES_WALKER_MAX_STEPS") return "50";
    return nullptr;
  };
  const RunConfig c = parse_config("[hyper]\nsigma = 0.1\n", env);
  EXPECT_EQ(c.hyper.sigma, 0.5);
  EXPECT_EQ(c.algorithm, Algorithm::nsr_es);
  EXPECT_EQ(c.walker.max_steps, 50u);
  const auto bad = [](const char* name) -> const char* {
    return std::string(name) == "NSES_HYPER_K" ? "0" : nullptr;
  };
  EXPECT_THROW(parse_config("", bad), ConfigError);
}

TEST(Run, ZeroGenerationsGivesInitialRecord) {
  const fs::path dir = scratch_dir("t0");
  const auto summary = run(tiny(Algorithm::ns_es, EnvKind::trap_walker, dir, 0));
  EXPECT_EQ(summary.generations, 0u);
  EXPECT_TRUE(std::isfinite(summary.best_mean_reward));
  EXPECT_EQ(line_count(dir / run_files::generations), 1u);
  EXPECT_EQ(line_count(dir / run_files::lineage), 3u);
  EXPECT_TRUE(fs::exists(dir / run_files::summary));
  EXPECT_TRUE(fs::exists(dir / run_files::best_policy));
  EXPECT_EQ(load_archive(dir / run_files::archive).size(), 3u);
}

TEST(Run, ArtifactsAreConsistent) {
  const fs::path dir = scratch_dir("artifacts");
  const RunConfig c = tiny(Algorithm::nsra_es, EnvKind::trap_walker, dir);
  const auto summary = run(c, RunOptions{.record = true});
  EXPECT_EQ(line_count(dir / run_files::generations), 1 + 12u);
  EXPECT_EQ(load_archive(dir / run_files::archive).size(), 3 + 12u);
  EXPECT_EQ(parse_config(slurp(dir / run_files::config)), c);
  const auto params = load_parameters(dir / run_files::best_policy);
  EXPECT_EQ(params.theta.dim(), MlpSpec({5, 2, {16, 16}, Activation::tanh, OutputSquash::tanh}).parameter_count());
  const auto j = nlohmann::json::parse(slurp(dir / run_files::summary));
  EXPECT_EQ(j.at("best_mean_reward").get<double>(), summary.best_mean_reward);
  EXPECT_EQ(j.at("generations").get<std::size_t>(), 12u);
  EXPECT_TRUE(j.contains("wall_seconds"));
  EXPECT_TRUE(fs::exists(dir / "trajectories" / "best.csv"));
  EXPECT_EQ(line_count(dir / "trajectories" / "agent_0.csv"), 1 + 1 + c.walker.max_steps);
}

TEST(Run, ReplayIsByteIdentical) {
  for (auto alg : {Algorithm::es, Algorithm::nsra_es}) {
    const fs::path a = scratch_dir("replay_a"), b = scratch_dir("replay_b");
    RunConfig ca = tiny(alg, EnvKind::trap_walker, a);
    RunConfig cb = tiny(alg, EnvKind::trap_walker, b);
    cb.workers = 5;
    run(ca);
    run(cb);
    for (const char* f : {run_files::generations, run_files::lineage, run_files::best_policy}) {
      EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
  }
}

TEST(Run, SeedOverrideChangesTheRun) {
  const fs::path a = scratch_dir("seed_a"), b = scratch_dir("seed_b");
  run(tiny(Algorithm::es, EnvKind::trap_walker, a), RunOptions{.seed = 1});
  run(tiny(Algorithm::es, EnvKind::trap_walker, b), RunOptions{.seed = 2});
  EXPECT_NE(slurp(a / run_files::generations), slurp(b / run_files::generations));
}

TEST(Run, ResumeMatchesUninterruptedRun) {
  for (auto env : {EnvKind::trap_walker, EnvKind::gridworld}) {
    const fs::path full = scratch_dir("full"), cut = scratch_dir("cut");
    const auto whole = run(tiny(Algorithm::nsra_es, env, full, 20));
    RunOptions first;
    first.checkpoint_every = 5;
    first.stop_after = 13;  // killed between checkpoints; resumes from gen 10
    run(tiny(Algorithm::nsra_es, env, cut, 20), first);
    EXPECT_FALSE(fs::exists(cut / run_files::summary));
    RunOptions second;
    second.resume = true;
    const auto resumed = run(tiny(Algorithm::nsra_es, env, cut, 20), second);
    EXPECT_EQ(resumed.best_mean_reward, whole.best_mean_reward);
    for (const char* f : {run_files::generations, run_files::lineage, run_files::best_policy, run_files::archive,
                          run_files::checkpoint}) {
      EXPECT_EQ(slurp(full / f), slurp(cut / f)) << f;
    }
  }
}

TEST(Run, ResumeRejectsChangedConfig) {
  const fs::path dir = scratch_dir("resume_bad");
  RunOptions first;
  first.stop_after = 8;
  first.checkpoint_every = 4;
  run(tiny(Algorithm::es, EnvKind::trap_walker, dir), first);
  RunConfig changed = tiny(Algorithm::es, EnvKind::trap_walker, dir);
  changed.hyper.sigma = 0.5;
  RunOptions second;
  second.resume = true;
  EXPECT_THROW(run(changed, second), ConfigError);
}

TEST(ExportOverhead, RowCounts) {
  const fs::path es_dir = scratch_dir("ov_es"), ns_dir = scratch_dir("ov_ns");
  run(tiny(Algorithm::es, EnvKind::trap_walker, es_dir, 9));
  RunConfig ns = tiny(Algorithm::ns_es, EnvKind::trap_walker, ns_dir, 40);
  ns.hyper.M = 5;
  run(ns);

  std::istringstream es_csv(slurp(export_overhead(es_dir)));
  std::string line;
  std::getline(es_csv, line);
  EXPECT_EQ(line, "gen,agent_id,x,y");
  std::size_t rows = 0;
  while (std::getline(es_csv, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.find(',') + 1, 2), "0,");
  }
  EXPECT_EQ(rows, 9u + 1);

  std::istringstream ns_csv(slurp(export_overhead(ns_dir)));
  std::getline(ns_csv, line);
  std::set<std::string> ids;
  rows = 0;
  while (std::getline(ns_csv, line)) {
    ++rows;
    const auto a = line.find(',');
    ids.insert(line.substr(a + 1, line.find(',', a + 1) - a - 1));
  }
  EXPECT_EQ(rows, 40u + 5);
  EXPECT_EQ(ids.size(), 5u);
}

TEST(ExportOverhead, TrajectoryBehaviorsRejected) {
  const fs::path dir = scratch_dir("ov_grid");
  run(tiny(Algorithm::ns_es, EnvKind::gridworld, dir, 2));
  EXPECT_THROW(export_overhead(dir), std::runtime_error);
}

TEST(Compare, MedianOfKnownValues) {
  EXPECT_EQ(median({1, 2, 3, 4, 5}), 3.0);
  EXPECT_EQ(median({5, 1, 4, 2}), 3.0);
  const auto single = bootstrap_median_ci({2.5});
  EXPECT_EQ(single.median, 2.5);
  EXPECT_EQ(single.low, 2.5);
  EXPECT_EQ(single.high, 2.5);
}

TEST(Compare, BootstrapMatchesIndependentResampler) {
  const std::vector<double> values{3.1, 0.4, 2.2, 5.9, 1.7, 4.4, 2.8, 3.9, 0.9, 6.3};
  const auto ci = bootstrap_median_ci(values, 1000, 0.95, 42);

  std::mt19937_64 gen(7);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> medians;
  for (int r = 0; r < 20000; ++r) {
    std::vector<double> s(values.size());
    for (double& v : s) v = values[pick(gen)];
    std::sort(s.begin(), s.end());
    medians.push_back((s[4] + s[5]) / 2);
  }
  std::sort(medians.begin(), medians.end());
  const double lo = medians[static_cast<std::size_t>(0.025 * medians.size())];
  const double hi = medians[static_cast<std::size_t>(0.975 * medians.size())];
  EXPECT_DOUBLE_EQ(ci.median, (2.8 + 3.1) / 2);
  EXPECT_NEAR(ci.low, lo, 0.35);
  EXPECT_NEAR(ci.high, hi, 0.35);
  EXPECT_LE(ci.low, ci.median);
  EXPECT_GE(ci.high, ci.median);
  // Seeded: the same call gives the same interval.
  const auto again = bootstrap_median_ci(values, 1000, 0.95, 42);
  EXPECT_EQ(again.low, ci.low);
  EXPECT_EQ(again.high, ci.high);
}

TEST(Compare, GroupsRunsAndListsAbsent) {
  const fs::path root = scratch_dir("cmp");
  for (std::uint64_t s = 0; s < 3; ++s) {
    run(tiny(Algorithm::es, EnvKind::trap_walker, root / ("es_" + std::to_string(s)), 2), RunOptions{.seed = s});
  }
  RunOptions killed;
  killed.stop_after = 1;
  run(tiny(Algorithm::ns_es, EnvKind::trap_walker, root / "ns_0", 2), killed);
  const auto rows = compare({root});
  ASSERT_EQ(rows.size(), 2u);
  const auto& es = rows[0].algorithm == "es" ? rows[0] : rows[1];
  const auto& ns = rows[0].algorithm == "es" ? rows[1] : rows[0];
  EXPECT_EQ(es.rewards.size(), 3u);
  ASSERT_TRUE(es.stats.has_value());
  EXPECT_EQ(es.stats->median, median(es.rewards));
  EXPECT_TRUE(ns.rewards.empty());
  EXPECT_EQ(ns.absent.size(), 1u);
  EXPECT_FALSE(ns.stats.has_value());
  EXPECT_NE(format_compare(rows).find("absent: "), std::string::npos);
}
