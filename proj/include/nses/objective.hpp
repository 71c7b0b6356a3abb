#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nses/episode.hpp"
#include "nses/gridworld.hpp"
#include "nses/policy.hpp"
#include "nses/walker.hpp"

namespace nses {

/// What the search engine optimizes: a parameter space, a seeded episodic
/// evaluation, and a behavior kind for novelty. evaluate must be safe to call
/// concurrently on a const object.
template <class O>
concept Objective = requires(const O& o, std::span<const double> theta, std::uint64_t seed,
                             SeededRng& rng) {
  { o.parameter_dim() } -> std::convertible_to<std::size_t>;
  { o.behavior_kind() } -> std::same_as<BehaviorKind>;
  { o.initial_theta(rng) } -> std::same_as<ParameterVector>;
  { o.evaluate(theta, seed) } -> std::same_as<EpisodeResult>;
};

template <class E>
concept Environment = requires(const E& e, MlpEvaluator& controller, std::uint64_t seed) {
  { E::observation_dim } -> std::convertible_to<std::size_t>;
  { E::action_dim } -> std::convertible_to<std::size_t>;
  { E::behavior_kind() } -> std::same_as<BehaviorKind>;
  { e.rollout(controller, seed) } -> std::same_as<EpisodeResult>;
};

inline MlpSpec default_policy_spec(std::size_t input_dim, std::size_t output_dim,
                                   OutputSquash squash) {
  return MlpSpec{input_dim, output_dim, {16, 16}, Activation::tanh, squash};
}

/// An environment driven by an MLP policy whose weights are theta.
template <Environment E>
class PolicyObjective {
 public:
  PolicyObjective(E env, MlpSpec spec) : env_(std::move(env)), spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.input_dim != E::observation_dim || spec_.output_dim != E::action_dim) {
      throw std::invalid_argument("policy spec does not match environment io dims");
    }
  }

  const E& env() const noexcept { return env_; }
  const MlpSpec& spec() const noexcept { return spec_; }

  std::size_t parameter_dim() const { return spec_.parameter_count(); }
  BehaviorKind behavior_kind() const { return E::behavior_kind(); }
  ParameterVector initial_theta(SeededRng& rng) const { return init_theta(spec_, rng); }

  EpisodeResult evaluate(std::span<const double> theta, std::uint64_t seed) const {
    MlpEvaluator policy(spec_, theta);
    return env_.rollout(policy, seed);
  }

 private:
  E env_;
  MlpSpec spec_;
};

inline PolicyObjective<Walker> make_walker_objective(const WalkerConfig& config) {
  return {Walker(config), default_policy_spec(Walker::observation_dim, Walker::action_dim, OutputSquash::tanh)};
}

inline PolicyObjective<Gridworld> make_gridworld_objective(const GridworldConfig& config) {
  return {Gridworld(config),
          default_policy_spec(Gridworld::observation_dim, Gridworld::action_dim, OutputSquash::none)};
}

/// f(theta) = -||theta - center||^2, starting from the origin. The behavior
/// is the first two coordinates, so novelty-based algorithms can run on it too.
class SphereObjective {
 public:
  explicit SphereObjective(std::vector<double> center) : center_(std::move(center)) {
    if (center_.size() < 2) throw std::invalid_argument("SphereObjective: need dim >= 2");
  }

  const std::vector<double>& center() const noexcept { return center_; }
  std::size_t parameter_dim() const { return center_.size(); }
  BehaviorKind behavior_kind() const { return BehaviorKind::final_position; }
  ParameterVector initial_theta(SeededRng&) const { return ParameterVector(center_.size()); }

  EpisodeResult evaluate(std::span<const double> theta, std::uint64_t) const {
    EpisodeResult r;
    r.total_reward = -squared_l2_distance(theta, center_);
    r.behavior = BehaviorDescriptor::final_position(theta[0], theta[1]);
    r.steps = 1;
    r.final_position = std::array<double, 2>{theta[0], theta[1]};
    return r;
  }

 private:
  std::vector<double> center_;
};

/// Wraps an objective and passes its reward through a fixed function.
template <Objective O, class F>
class TransformedObjective {
 public:
  TransformedObjective(O inner, F transform) : inner_(std::move(inner)), transform_(std::move(transform)) {}

  std::size_t parameter_dim() const { return inner_.parameter_dim(); }
  BehaviorKind behavior_kind() const { return inner_.behavior_kind(); }
  ParameterVector initial_theta(SeededRng& rng) const { return inner_.initial_theta(rng); }

  EpisodeResult evaluate(std::span<const double> theta, std::uint64_t seed) const {
    EpisodeResult r = inner_.evaluate(theta, seed);
    r.total_reward = transform_(r.total_reward);
    return r;
  }

 private:
  O inner_;
  F transform_;
};

}  // namespace nses
