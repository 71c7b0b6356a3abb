#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nses/episode.hpp"
#include "nses/rng.hpp"

namespace nses {

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Character map: '#' wall, '.' floor, 'S' start, 'd' decoy goal, 'G' goal.
class GridMap {
 public:
  static GridMap parse(const std::string& text) {
    GridMap map;
    std::istringstream in(text);
    std::string line;
    bool have_start = false, have_decoy = false, have_goal = false;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (map.cols_ == 0) map.cols_ = static_cast<int>(line.size());
      if (static_cast<int>(line.size()) != map.cols_) throw std::invalid_argument("grid map: ragged rows");
      for (int c = 0; c < map.cols_; ++c) {
        const char ch = line[static_cast<std::size_t>(c)];
        const Cell here{map.rows_, c};
        switch (ch) {
          case '#': case '.': break;
          case 'S': map.start_ = here; have_start = true; break;
          case 'd': map.decoy_ = here; have_decoy = true; break;
          case 'G': map.goal_ = here; have_goal = true; break;
          default: throw std::invalid_argument(std::string("grid map: unknown cell '") + ch + "'");
        }
        map.walls_.push_back(ch == '#');
      }
      ++map.rows_;
    }
    if (!have_start || !have_decoy || !have_goal) {
      throw std::invalid_argument("grid map: needs exactly one each of S, d, G");
    }
    return map;
  }

  static GridMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grid map " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// The shipped 11x11 map: a decoy three moves from the start and the goal
  /// 18 moves away behind a wall.
  static GridMap default_map() { return parse(default_text()); }

  static const char* default_text() {
    return "###########\n"
           "#S..#.....#\n"
           "#...#.###.#\n"
           "#.d.#.#G#.#\n"
           "#...#.#.#.#\n"
           "#.#.#.#.#.#\n"
           "#.#...#...#\n"
           "#.#####.###\n"
           "#.........#\n"
           "#.........#\n"
           "###########\n";
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  Cell start() const noexcept { return start_; }
  Cell decoy() const noexcept { return decoy_; }
  Cell goal() const noexcept { return goal_; }

  bool blocked(Cell c) const {
    if (c.row < 0 || c.col < 0 || c.row >= rows_ || c.col >= cols_) return true;
    return walls_[static_cast<std::size_t>(c.row * cols_ + c.col)];
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  Cell start_, decoy_, goal_;
  std::vector<bool> walls_;
};

struct GridworldConfig {
  GridMap map = GridMap::default_map();
  std::size_t max_steps = 40;
  double decoy_value = 1.0;
  double goal_value = 10.0;
  double obs_noise_std = 0.0;

  void validate() const {
    if (max_steps == 0) throw std::invalid_argument("gridworld: max_steps must be positive");
    if (!(obs_noise_std >= 0.0)) throw std::invalid_argument("gridworld: obs_noise_std must be >= 0");
  }
};

enum class GridAction { stay = 0, up, down, left, right };

/// Discrete maze with a sparse reward: entering the decoy or the goal ends the
/// episode with that cell's value. The behavior is the (row, col) sequence
/// after every step.
class Gridworld {
 public:
  static constexpr std::size_t observation_dim = 3;
  static constexpr std::size_t action_dim = 5;
  static constexpr std::size_t state_dim = 2;

  explicit Gridworld(GridworldConfig config) : config_(std::move(config)) { config_.validate(); }

  const GridworldConfig& config() const noexcept { return config_; }
  static constexpr BehaviorKind behavior_kind() { return BehaviorKind::trajectory; }

  /// Greedy decoding of the action logits; ties go to the lowest index, so an
  /// all-zero output means stay.
  static GridAction decode(std::span<const double> logits) {
    if (logits.size() != action_dim) throw std::invalid_argument("gridworld: action dim mismatch");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    return static_cast<GridAction>(best);
  }

  template <Controller C>
  EpisodeResult rollout(C& controller, std::uint64_t episode_seed) const {
    SeededRng rng(episode_seed, stream::rollout);
    const GridMap& map = config_.map;
    Cell pos = map.start();
    std::vector<double> states;
    states.reserve(config_.max_steps * state_dim);
    double reward = 0.0;
    std::size_t steps = 0;
    std::array<double, observation_dim> obs{};

    while (steps < config_.max_steps) {
      obs = {static_cast<double>(pos.row) / (map.rows() - 1),
             static_cast<double>(pos.col) / (map.cols() - 1),
             1.0 - 2.0 * static_cast<double>(steps) / static_cast<double>(config_.max_steps)};
      if (config_.obs_noise_std > 0.0) {
        for (double& o : obs) o += config_.obs_noise_std * rng.normal();
      }
      const auto& raw = controller(std::span<const double>(obs));
      pos = move(pos, decode(std::span<const double>(raw)));
      ++steps;
      states.push_back(pos.row);
      states.push_back(pos.col);
      if (pos == map.goal()) {
        reward = config_.goal_value;
        break;
      }
      if (pos == map.decoy()) {
        reward = config_.decoy_value;
        break;
      }
    }

    EpisodeResult result;
    result.total_reward = reward;
    result.behavior = BehaviorDescriptor::trajectory(state_dim, std::move(states));
    result.steps = steps;
    return result;
  }

  Cell move(Cell from, GridAction action) const {
    Cell to = from;
    switch (action) {
      case GridAction::stay: break;
      case GridAction::up: --to.row; break;
      case GridAction::down: ++to.row; break;
      case GridAction::left: --to.col; break;
      case GridAction::right: ++to.col; break;
    }
    return config_.map.blocked(to) ? from : to;
  }

 private:
  GridworldConfig config_;
};

}  // namespace nses
