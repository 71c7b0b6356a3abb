#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nses/behavior.hpp"
#include "nses/noise_table.hpp"
#include "nses/rng.hpp"

namespace nses {

/// One perturbation to evaluate. Workers get indices and seeds, never vectors.
struct WorkOrder {
  std::int64_t generation = 0;
  std::int64_t agent_id = 0;
  std::size_t sample_index = 0;
  PerturbationRef perturbation;
  std::uint64_t episode_seed = 0;
};

/// What a worker sends back: scalars, plus the behavior only on request.
struct WorkResult {
  std::size_t sample_index = 0;
  double fitness = 0.0;
  double novelty = 0.0;
  std::optional<BehaviorDescriptor> behavior;
};

inline std::uint64_t episode_seed_for(std::uint64_t run_seed, std::int64_t generation,
                                      std::int64_t agent_id, std::size_t sample_index) {
  return derive_seed({run_seed, stream::rollout, static_cast<std::uint64_t>(generation),
                      static_cast<std::uint64_t>(agent_id), sample_index});
}

inline std::size_t default_worker_count() {
  return std::max(1u, std::thread::hardware_concurrency());
}

struct BatchOptions {
  std::size_t workers = 1;
  // When set, workers claim items in a seeded random order instead of 0..n-1.
  // Results must not depend on it; tests use it to shake out ordering bugs.
  std::optional<std::uint64_t> shuffle_seed;
};

/// Raised when an item of a batch throws. Carries the failing work item.
class BatchError : public std::runtime_error {
 public:
  BatchError(std::int64_t generation, std::int64_t agent_id, std::size_t sample_index,
             const std::string& cause)
      : std::runtime_error("rollout failed (gen " + std::to_string(generation) + ", agent " +
                           std::to_string(agent_id) + ", sample " + std::to_string(sample_index) +
                           "): " + cause),
        generation_(generation),
        agent_id_(agent_id),
        sample_index_(sample_index) {}

  std::int64_t generation() const noexcept { return generation_; }
  std::int64_t agent_id() const noexcept { return agent_id_; }
  std::size_t sample_index() const noexcept { return sample_index_; }

 private:
  std::int64_t generation_;
  std::int64_t agent_id_;
  std::size_t sample_index_;
};

/// Runs task(i) for every i in [0, n) on `workers` threads and returns the
/// results in index order. The caller's thread is one of the workers. The
/// first failure stops further claims; once in-flight tasks finish, the
/// exception of the lowest failing index is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t n, const BatchOptions& options,
                            const std::function<R(std::size_t)>& task) {
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::size_t> claim_order(n);
  std::iota(claim_order.begin(), claim_order.end(), std::size_t{0});
  if (options.shuffle_seed) {
    SeededRng rng(*options.shuffle_seed, 0);
    for (std::size_t i = n; i > 1; --i) std::swap(claim_order[i - 1], claim_order[rng.uniform_index(i)]);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto drain = [&] {
    for (std::size_t c = next.fetch_add(1); c < n && !failed.load(); c = next.fetch_add(1)) {
      const std::size_t i = claim_order[c];
      try {
        slots[i].emplace(task(i));
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };

  const std::size_t threads = std::min(std::max<std::size_t>(options.workers, 1), std::max<std::size_t>(n, 1));
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(drain);
    drain();
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Evaluates every order with `evaluate` and returns results in sample-index
/// order, whatever the worker count or completion order.
inline std::vector<WorkResult> evaluate_batch(
    const std::vector<WorkOrder>& orders, const BatchOptions& options,
    const std::function<WorkResult(const WorkOrder&)>& evaluate) {
  std::function<WorkResult(std::size_t)> task = [&](std::size_t i) {
    const WorkOrder& order = orders[i];
    try {
      WorkResult r = evaluate(order);
      r.sample_index = order.sample_index;
      return r;
    } catch (const std::exception& e) {
      throw BatchError(order.generation, order.agent_id, order.sample_index, e.what());
    }
  };
  auto results = parallel_map<WorkResult>(orders.size(), options, task);
  std::stable_sort(results.begin(), results.end(),
                   [](const WorkResult& a, const WorkResult& b) { return a.sample_index < b.sample_index; });
  return results;
}

}  // namespace nses
