#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nses/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Evolution strategies with novelty-driven exploration"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string output_dir;
  bool record = false;
  bool resume = false;
  std::size_t checkpoint_every = 10;
  auto* run_cmd = app.add_subcommand("run", "Run one search from a config file");
  run_cmd->add_option("config", config_path, "Config file")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Run seed (overrides run.seed)");
  auto* workers_opt = run_cmd->add_option("--workers", workers, "Worker threads (overrides run.workers)");
  auto* out_opt = run_cmd->add_option("--output", output_dir, "Output directory (overrides run.output_dir)");
  run_cmd->add_flag("--record", record, "Write trajectory CSVs of the final and best policies");
  run_cmd->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
  run_cmd->add_option("--checkpoint-every", checkpoint_every, "Generations between checkpoints (0: only at the end)");

  std::vector<std::string> compare_dirs;
  std::size_t resamples = 1000;
  auto* compare_cmd = app.add_subcommand("compare", "Median and bootstrap CI of best rewards per algorithm");
  compare_cmd->add_option("dirs", compare_dirs, "Run directories, or directories of runs")->required();
  compare_cmd->add_option("--resamples", resamples, "Bootstrap resamples");

  std::string run_dir;
  auto* export_cmd = app.add_subcommand("export-overhead", "Write per-generation final positions as CSV");
  export_cmd->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      nses::RunOptions options;
      if (*seed_opt) options.seed = seed;
      if (*workers_opt) options.workers = workers;
      if (*out_opt) options.output_dir = output_dir;
      options.record = record;
      options.resume = resume;
      options.checkpoint_every = checkpoint_every;
      const nses::RunConfig config = nses::load_config(config_path);
      const auto summary = nses::run(config, options);
      std::printf("best_mean_reward %.6g after %zu generations (%.1fs) -> %s\n", summary.best_mean_reward,
                  summary.generations, summary.wall_seconds, summary.directory.string().c_str());
    } else if (*compare_cmd) {
      std::vector<std::filesystem::path> dirs(compare_dirs.begin(), compare_dirs.end());
      std::cout << nses::format_compare(nses::compare(dirs, resamples));
    } else if (*export_cmd) {
      std::cout << nses::export_overhead(run_dir).string() << "\n";
    }
  } catch (const nses::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
