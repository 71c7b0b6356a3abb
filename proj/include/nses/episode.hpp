#pragma once

#include <array>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>

#include "nses/behavior.hpp"

namespace nses {

/// f(theta) and b(pi_theta) for one episode.
struct EpisodeResult {
  double total_reward = 0.0;
  BehaviorDescriptor behavior;
  std::size_t steps = 0;
  std::optional<std::array<double, 2>> final_position;
};

/// Anything mapping an observation to an action vector: an MlpEvaluator, or a
/// scripted lambda in tests.
template <class C>
concept Controller = requires(C& c, std::span<const double> obs) {
  { c(obs) };
  requires std::convertible_to<decltype(c(obs)), std::span<const double>> ||
               std::convertible_to<decltype(c(obs)), const std::vector<double>&>;
};

}  // namespace nses
