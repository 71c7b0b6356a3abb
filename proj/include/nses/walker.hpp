#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nses/episode.hpp"
#include "nses/rng.hpp"

namespace nses {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  bool operator==(const Vec2&) const = default;
};

/// Positions, applied (clipped) actions and reward-to-date for each step.
struct WalkerTrace {
  std::vector<Vec2> positions;
  std::vector<Vec2> actions;
  std::vector<double> rewards;
};

inline double energy_spent(std::span<const Vec2> actions, double energy_cost) {
  double sum = 0.0;
  for (const Vec2& a : actions) sum += a.squared_norm();
  return energy_cost * sum;
}

/// Distance of the final position from the origin minus the energy term.
inline double reward_isotropic(const WalkerTrace& trace, double energy_cost) {
  const Vec2 end = trace.positions.empty() ? Vec2{} : trace.positions.back();
  return end.norm() - energy_spent(trace.actions, energy_cost);
}

/// Final x minus the energy term.
inline double reward_deceptive(const WalkerTrace& trace, double energy_cost) {
  const Vec2 end = trace.positions.empty() ? Vec2{} : trace.positions.back();
  return end.x - energy_spent(trace.actions, energy_cost);
}

enum class WalkerReward { isotropic, forward };

/// 2-D point-mass walker. With `trap` set, a three-sided axis-aligned
/// enclosure sits in front of the start: the front wall at x = trap_x spans
/// |y| <= trap_half_width, the side walls at y = +-trap_half_width span
/// x in [trap_x - trap_depth, trap_x], and the open side faces -x.
struct WalkerConfig {
  WalkerReward reward = WalkerReward::forward;
  bool trap = true;
  double trap_x = 2.0;
  double trap_half_width = 1.0;
  double trap_depth = 1.5;
  double step_force_limit = 1.0;
  double drag = 0.95;
  double dt = 0.05;
  std::size_t max_steps = 200;
  double obs_noise_std = 0.01;
  double energy_cost = 1e-3;

  static WalkerConfig trap_walker() { return {}; }

  static WalkerConfig isotropic_walker() {
    WalkerConfig c;
    c.reward = WalkerReward::isotropic;
    c.trap = false;
    return c;
  }

  void validate() const {
    if (trap && !(trap_half_width > 0.0 && trap_depth > 0.0)) {
      throw std::invalid_argument("walker: trap dimensions must be positive");
    }
    if (trap && trap_x - trap_depth <= 0.0) {
      // The start must lie outside the enclosure, in front of its opening.
      throw std::invalid_argument("walker: origin must lie in front of the trap opening");
    }
    if (!(step_force_limit > 0.0)) throw std::invalid_argument("walker: step_force_limit must be > 0");
    if (!(drag >= 0.0 && drag < 1.0)) throw std::invalid_argument("walker: drag must be in [0, 1)");
    if (!(dt > 0.0)) throw std::invalid_argument("walker: dt must be > 0");
    if (max_steps == 0) throw std::invalid_argument("walker: max_steps must be positive");
    if (!(obs_noise_std >= 0.0)) throw std::invalid_argument("walker: obs_noise_std must be >= 0");
    if (!(energy_cost >= 0.0)) throw std::invalid_argument("walker: energy_cost must be >= 0");
  }
};

class Walker {
 public:
  static constexpr std::size_t observation_dim = 5;
  static constexpr std::size_t action_dim = 2;
  // Clamped positions stay this far on the approach side of a wall, so a
  // resting agent is never ambiguous about which side it is on.
  static constexpr double wall_gap = 1e-9;
  static constexpr double position_scale = 0.2;

  explicit Walker(WalkerConfig config) : config_(config) { config_.validate(); }

  const WalkerConfig& config() const noexcept { return config_; }
  static constexpr BehaviorKind behavior_kind() { return BehaviorKind::final_position; }

  /// Observation: scaled position, velocity, and a phase running from 1 down
  /// towards -1 over the episode. Noise is the only stochastic element.
  template <Controller C>
  EpisodeResult rollout(C& controller, std::uint64_t episode_seed, WalkerTrace* trace = nullptr) const {
    SeededRng rng(episode_seed, stream::rollout);
    const auto& c = config_;
    Vec2 pos;
    Vec2 vel;
    double energy = 0.0;
    std::array<double, observation_dim> obs{};

    for (std::size_t t = 0; t < c.max_steps; ++t) {
      obs = {pos.x * position_scale, pos.y * position_scale, vel.x, vel.y,
             1.0 - 2.0 * static_cast<double>(t) / static_cast<double>(c.max_steps)};
      if (c.obs_noise_std > 0.0) {
        for (double& o : obs) o += c.obs_noise_std * rng.normal();
      }
      const auto& raw = controller(std::span<const double>(obs));
      const std::span<const double> action(raw);
      if (action.size() != action_dim) throw std::invalid_argument("walker: action dim mismatch");
      const Vec2 a{std::clamp(action[0], -c.step_force_limit, c.step_force_limit),
                   std::clamp(action[1], -c.step_force_limit, c.step_force_limit)};
      if (!std::isfinite(a.x) || !std::isfinite(a.y)) throw std::runtime_error("walker: non-finite action");

      vel.x = c.drag * vel.x + a.x * c.dt;
      vel.y = c.drag * vel.y + a.y * c.dt;
      step(pos, vel);
      energy += c.energy_cost * a.squared_norm();

      if (trace != nullptr) {
        trace->positions.push_back(pos);
        trace->actions.push_back(a);
        trace->rewards.push_back(progress(pos) - energy);
      }
    }

    EpisodeResult result;
    result.total_reward = progress(pos) - energy;
    result.behavior = BehaviorDescriptor::final_position(pos.x, pos.y);
    result.steps = c.max_steps;
    result.final_position = std::array<double, 2>{pos.x, pos.y};
    return result;
  }

  /// Integrates one step of motion with inelastic wall contacts. x moves
  /// first, then y, each against the axis-aligned walls crossing its path.
  void step(Vec2& pos, Vec2& vel) const {
    const auto& c = config_;
    double nx = pos.x + vel.x * c.dt;
    if (c.trap && std::abs(pos.y) <= c.trap_half_width) {
      if (pos.x < c.trap_x && nx >= c.trap_x) {
        nx = c.trap_x - wall_gap;
        vel.x = 0.0;
      } else if (pos.x > c.trap_x && nx <= c.trap_x) {
        nx = c.trap_x + wall_gap;
        vel.x = 0.0;
      }
    }
    pos.x = nx;

    double ny = pos.y + vel.y * c.dt;
    if (c.trap && pos.x >= c.trap_x - c.trap_depth && pos.x <= c.trap_x) {
      // Walls in the order the path meets them; the first contact stops it.
      const double h = c.trap_half_width;
      const std::array<double, 2> walls = ny >= pos.y ? std::array{-h, h} : std::array{h, -h};
      for (const double wall : walls) {
        if (pos.y < wall && ny >= wall) {
          ny = wall - wall_gap;
          vel.y = 0.0;
          break;
        }
        if (pos.y > wall && ny <= wall) {
          ny = wall + wall_gap;
          vel.y = 0.0;
          break;
        }
      }
    }
    pos.y = ny;
  }

  /// Whether pos sits on a wall segment (within wall_gap / 2). A correct
  /// rollout never leaves the agent there.
  bool on_wall(Vec2 pos) const {
    const auto& c = config_;
    if (!c.trap) return false;
    const double tol = wall_gap / 2;
    const bool front = std::abs(pos.x - c.trap_x) < tol && std::abs(pos.y) <= c.trap_half_width;
    const bool in_span = pos.x >= c.trap_x - c.trap_depth && pos.x <= c.trap_x;
    const bool side = in_span && std::abs(std::abs(pos.y) - c.trap_half_width) < tol;
    return front || side;
  }

 private:
  double progress(Vec2 pos) const {
    return config_.reward == WalkerReward::isotropic ? pos.norm() : pos.x;
  }

  WalkerConfig config_;
};

}  // namespace nses
