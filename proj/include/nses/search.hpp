#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nses/behavior.hpp"
#include "nses/es.hpp"
#include "nses/explore.hpp"
#include "nses/noise_table.hpp"
#include "nses/objective.hpp"
#include "nses/parallel.hpp"
#include "nses/rng.hpp"
#include "nses/tensor.hpp"

namespace nses {

struct SearchParams {
  Algorithm algorithm = Algorithm::es;
  std::size_t population = 200;  // n, perturbations per generation
  double sigma = 0.02;
  AdamConfig adam{};
  std::size_t meta_population = 5;  // M; plain ES always runs one agent
  std::size_t k = 10;
  double initial_w = 1.0;
  std::size_t t_w = 50;
  double delta_w = 0.05;
  // nsra-es only: hold w fixed and never run the controller.
  std::optional<double> pinned_w;
  bool mirrored = false;
  double archive_probability = 1.0;
  std::size_t eval_episodes = 30;
  std::size_t eval_every = 10;
  double l2_coeff = 0.0;
  std::uint64_t run_seed = 0;
  BatchOptions batch{};

  std::size_t agent_count() const { return algorithm == Algorithm::es ? 1 : meta_population; }

  void validate() const {
    if (population == 0) throw std::invalid_argument("population n must be positive");
    if (mirrored && population % 2 != 0) throw std::invalid_argument("mirrored sampling needs an even n");
    if (population < 2) throw std::invalid_argument("rank normalization needs n >= 2");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    if (!(adam.alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) throw std::invalid_argument("beta1 must be in (0, 1)");
    if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) throw std::invalid_argument("beta2 must be in (0, 1)");
    if (!(adam.epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be > 0");
    if (meta_population == 0) throw std::invalid_argument("meta-population M must be positive");
    if (k == 0) throw std::invalid_argument("k must be positive");
    if (!(initial_w >= 0.0 && initial_w <= 1.0)) throw std::invalid_argument("initial w must be in [0, 1]");
    if (t_w == 0) throw std::invalid_argument("t_w must be positive");
    if (!(delta_w > 0.0)) throw std::invalid_argument("delta_w must be > 0");
    if (pinned_w && !(*pinned_w >= 0.0 && *pinned_w <= 1.0)) throw std::invalid_argument("pinned w must be in [0, 1]");
    if (!(archive_probability > 0.0 && archive_probability <= 1.0)) {
      throw std::invalid_argument("archive_probability must be in (0, 1]");
    }
    if (eval_episodes == 0) throw std::invalid_argument("eval_episodes must be positive");
    if (eval_every == 0) throw std::invalid_argument("eval_every must be positive");
    if (!(l2_coeff >= 0.0)) throw std::invalid_argument("l2_coeff must be >= 0");
  }
};

struct Agent {
  std::size_t id = 0;
  ParameterVector theta;
  AdamState adam;
  BehaviorDescriptor behavior;  // b(pi_theta) of the current theta
  bool needs_evaluation = true;  // theta changed since its last best-policy evaluation

  bool operator==(const Agent&) const = default;
};

struct BestPolicy {
  ParameterVector theta;
  double mean_reward = -std::numeric_limits<double>::infinity();
  std::size_t agent_id = 0;
  std::size_t generation = 0;

  bool valid() const { return std::isfinite(mean_reward); }
  bool operator==(const BestPolicy&) const = default;
};

/// Everything needed to continue a run from a generation boundary.
struct SearchState {
  std::size_t generation = 0;
  std::vector<Agent> agents;
  std::optional<Archive> archive;
  WeightController controller;
  BestPolicy best;

  bool operator==(const SearchState&) const = default;
};

struct GenerationStats {
  std::size_t generation = 0;
  std::size_t agent_id = 0;
  double mean_fitness = 0.0;
  double max_fitness = 0.0;
  double best_so_far = 0.0;
  double novelty_of_theta = std::numeric_limits<double>::quiet_NaN();
  double novelty_of_selected = std::numeric_limits<double>::quiet_NaN();
  double w = 1.0;
  std::size_t archive_size = 0;
  bool archived = false;
  BehaviorDescriptor behavior;  // b(pi) of the updated agent
  ParameterVector gradient;     // the estimate the agent stepped along
};

/// ES / NS-ES / NSR-ES / NSRA-ES over any Objective.
///
/// The coordinator (the caller's thread) owns all mutable state. Each
/// generation it freezes theta and the archive, fans the n rollouts out to
/// the worker pool, and applies the reduction once all results are back.
template <Objective O>
class Search {
 public:
  Search(const O& objective, SearchParams params, const NoiseTable& table)
      : objective_(objective), params_(std::move(params)), table_(table) {
    params_.validate();
    check_dims();
    const std::size_t dim = objective_.parameter_dim();
    state_.controller = WeightController{params_.initial_w, params_.t_w, params_.delta_w,
                                         -std::numeric_limits<double>::infinity(), 0};
    if (uses_novelty(params_.algorithm)) state_.archive.emplace(objective_.behavior_kind(), params_.k);

    for (std::size_t m = 0; m < params_.agent_count(); ++m) {
      SeededRng rng(derive_seed({params_.run_seed, stream::init_theta, m}), stream::init_theta);
      Agent agent;
      agent.id = m;
      agent.theta = objective_.initial_theta(rng);
      if (agent.theta.dim() != dim) throw std::logic_error("objective returned theta of wrong dim");
      agent.adam = AdamState::fresh(dim, params_.adam);
      agent.behavior = behavior_of(agent.theta, 0, m);
      if (state_.archive) state_.archive->add(agent.behavior);
      state_.agents.push_back(std::move(agent));
    }
    evaluate_pending({});
  }

  /// Resumes from a saved state.
  Search(const O& objective, SearchParams params, const NoiseTable& table, SearchState restored)
      : objective_(objective), params_(std::move(params)), table_(table), state_(std::move(restored)) {
    params_.validate();
    check_dims();
    if (state_.agents.size() != params_.agent_count()) throw std::invalid_argument("restored state has wrong agent count");
    if (uses_novelty(params_.algorithm) != state_.archive.has_value()) {
      throw std::invalid_argument("restored state archive does not match algorithm");
    }
  }

  const SearchState& state() const noexcept { return state_; }
  const SearchParams& params() const noexcept { return params_; }

  double current_w() const {
    switch (params_.algorithm) {
      case Algorithm::es: return 1.0;
      case Algorithm::ns_es: return 0.0;
      case Algorithm::nsr_es: return 0.5;
      case Algorithm::nsra_es: return params_.pinned_w.value_or(state_.controller.w);
    }
    return 1.0;
  }

  /// Novelty of every agent's current behavior against the archive.
  std::vector<double> agent_novelties() const {
    std::vector<double> out;
    for (const Agent& a : state_.agents) out.push_back(state_.archive->novelty(a.behavior));
    return out;
  }

  GenerationStats step() {
    const std::size_t g = state_.generation + 1;
    const Algorithm alg = params_.algorithm;
    const bool novelty_on = uses_novelty(alg);

    // Pick the agent to advance.
    std::size_t m = 0;
    double novelty_of_selected = std::numeric_limits<double>::quiet_NaN();
    if (novelty_on) {
      const auto novelties = agent_novelties();
      SeededRng rng(derive_seed({params_.run_seed, stream::selection, g}), stream::selection);
      m = select_agent(novelties, rng);
      novelty_of_selected = novelties[m];
    }
    Agent& agent = state_.agents[m];

    // Sample perturbations and build work orders.
    const std::size_t n = params_.population;
    const std::size_t dim = agent.theta.dim();
    std::vector<PerturbationRef> refs;
    refs.reserve(n);
    SeededRng noise_rng(derive_seed({params_.run_seed, stream::perturbation, g}), stream::perturbation);
    if (params_.mirrored) {
      for (std::size_t i = 0; i < n / 2; ++i) {
        auto [plus, minus] = table_.sample_mirrored_pair(noise_rng, dim);
        refs.push_back(plus);
        refs.push_back(minus);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) refs.push_back(table_.sample_ref(noise_rng, dim));
    }
    std::vector<WorkOrder> orders(n);
    for (std::size_t i = 0; i < n; ++i) {
      orders[i] = WorkOrder{static_cast<std::int64_t>(g), static_cast<std::int64_t>(m), i, refs[i],
                            episode_seed_for(params_.run_seed, static_cast<std::int64_t>(g),
                                             static_cast<std::int64_t>(m), i)};
    }

    // Evaluate against the frozen theta and archive.
    const ParameterVector& theta = agent.theta;
    const Archive* archive = novelty_on ? &*state_.archive : nullptr;
    const auto results = evaluate_batch(orders, params_.batch, [&](const WorkOrder& order) {
      const ParameterVector perturbed = table_.perturb(theta, order.perturbation, params_.sigma);
      EpisodeResult r = objective_.evaluate(perturbed.view(), order.episode_seed);
      WorkResult out;
      out.fitness = r.total_reward;
      if (!std::isfinite(out.fitness)) throw std::runtime_error("non-finite episode reward");
      out.novelty = archive != nullptr ? archive->novelty(r.behavior) : 0.0;
      return out;
    });

    // Reduce on the coordinator, in sample-index order.
    std::vector<double> fitness(n), novelty(n);
    for (std::size_t i = 0; i < n; ++i) {
      fitness[i] = results[i].fitness;
      novelty[i] = results[i].novelty;
    }
    const double w = current_w();
    const auto weights = sample_weights(alg, fitness, novelty, w);
    ParameterVector gradient = estimate_gradient(weights, refs, params_.sigma, table_);
    if (params_.l2_coeff > 0.0) {
      std::vector<double> decayed(gradient.values());
      for (std::size_t j = 0; j < dim; ++j) decayed[j] -= params_.l2_coeff * theta[j];
      gradient = ParameterVector(std::move(decayed));
    }
    auto [adam, stepped] = adam_step(agent.adam, agent.theta, gradient.view());
    agent.adam = std::move(adam);
    agent.theta = std::move(stepped);
    agent.needs_evaluation = true;
    agent.behavior = behavior_of(agent.theta, g, m);

    GenerationStats stats;
    stats.generation = g;
    stats.agent_id = m;
    stats.novelty_of_selected = novelty_of_selected;
    stats.w = w;
    stats.behavior = agent.behavior;
    stats.gradient = std::move(gradient);
    double sum = 0.0;
    stats.max_fitness = -std::numeric_limits<double>::infinity();
    for (double f : fitness) {
      sum += f;
      stats.max_fitness = std::max(stats.max_fitness, f);
    }
    stats.mean_fitness = sum / static_cast<double>(n);

    std::vector<std::pair<std::size_t, double>> known;
    if (novelty_on) {
      stats.novelty_of_theta = state_.archive->novelty(agent.behavior);
      if (alg == Algorithm::nsra_es && !params_.pinned_w) {
        const double f_new = evaluate_mean(agent.theta, g, m);
        state_.controller = update_weight(state_.controller, f_new);
        known.emplace_back(m, f_new);
      }
      bool add = true;
      if (params_.archive_probability < 1.0) {
        SeededRng coin(derive_seed({params_.run_seed, stream::archive_coin, g}), stream::archive_coin);
        add = coin.uniform() < params_.archive_probability;
      }
      if (add) state_.archive->add(agent.behavior);
      stats.archived = add;
      stats.archive_size = state_.archive->size();
    }

    state_.generation = g;
    if (g % params_.eval_every == 0) evaluate_pending(known);
    stats.best_so_far = state_.best.mean_reward;
    return stats;
  }

  /// Evaluates agents changed since their last evaluation. Runs call this
  /// once after the final generation when T is not a multiple of eval_every.
  void finish() { evaluate_pending({}); }

  /// Mean reward of theta over eval_episodes seeded episodes.
  double evaluate_mean(const ParameterVector& theta, std::size_t generation, std::size_t agent_id) const {
    const std::function<double(std::size_t)> episode = [&](std::size_t e) {
      const std::uint64_t seed = derive_seed({params_.run_seed, stream::evaluation, generation, agent_id, e});
      return objective_.evaluate(theta.view(), seed).total_reward;
    };
    const auto rewards = parallel_map<double>(params_.eval_episodes, params_.batch, episode);
    double sum = 0.0;
    for (double r : rewards) sum += r;
    return sum / static_cast<double>(rewards.size());
  }

 private:
  void check_dims() const {
    if (objective_.parameter_dim() == 0) throw std::invalid_argument("objective has no parameters");
    if (objective_.parameter_dim() > table_.size()) {
      throw std::invalid_argument("noise table smaller than parameter dim");
    }
  }

  BehaviorDescriptor behavior_of(const ParameterVector& theta, std::size_t generation, std::size_t agent_id) const {
    const std::uint64_t seed = derive_seed({params_.run_seed, stream::behavior, generation, agent_id});
    return objective_.evaluate(theta.view(), seed).behavior;
  }

  // Best-policy tracking: the highest mean reward over eval_episodes seen at
  // any evaluation point is kept. `known` holds means already computed this
  // generation with the same seeds.
  void evaluate_pending(const std::vector<std::pair<std::size_t, double>>& known) {
    for (Agent& agent : state_.agents) {
      if (!agent.needs_evaluation) continue;
      double mean = 0.0;
      bool cached = false;
      for (const auto& [id, value] : known) {
        if (id == agent.id) {
          mean = value;
          cached = true;
        }
      }
      if (!cached) mean = evaluate_mean(agent.theta, state_.generation, agent.id);
      agent.needs_evaluation = false;
      if (mean > state_.best.mean_reward) {
        state_.best = BestPolicy{agent.theta, mean, agent.id, state_.generation};
      }
    }
  }

  const O& objective_;
  SearchParams params_;
  const NoiseTable& table_;
  SearchState state_;
};

}  // namespace nses
