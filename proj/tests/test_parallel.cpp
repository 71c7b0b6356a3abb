#include <atomic>
#include <chrono>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "nses/objective.hpp"
#include "nses/parallel.hpp"
#include "nses/search.hpp"

using namespace nses;

TEST(ParallelMap, ResultsInIndexOrder) {
  for (std::size_t workers : {1, 2, 8}) {
    for (std::optional<std::uint64_t> shuffle : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{9}}) {
      const std::function<std::size_t(std::size_t)> sq = [](std::size_t i) { return i * i; };
      const auto out = parallel_map<std::size_t>(1000, BatchOptions{workers, shuffle}, sq);
      ASSERT_EQ(out.size(), 1000u);
      for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i], i * i);
    }
  }
}

TEST(ParallelMap, EmptyBatch) {
  const std::function<int(std::size_t)> f = [](std::size_t) { return 1; };
  EXPECT_TRUE(parallel_map<int>(0, BatchOptions{4, {}}, f).empty());
}

TEST(ParallelMap, UsesSeveralThreads) {
  std::mutex mu;
  std::set<std::thread::id> ids;
  const std::function<int(std::size_t)> f = [&](std::size_t) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    std::lock_guard lock(mu);
    ids.insert(std::this_thread::get_id());
    return 0;
  };
  parallel_map<int>(64, BatchOptions{4, {}}, f);
  EXPECT_GT(ids.size(), 1u);
}

TEST(EvaluateBatch, FailureNamesTheWorkItem) {
  std::vector<WorkOrder> orders(50);
  for (std::size_t i = 0; i < orders.size(); ++i) orders[i] = WorkOrder{7, 2, i, {}, 0};
  const auto fn = [](const WorkOrder& o) -> WorkResult {
    if (o.sample_index == 13 || o.sample_index == 40) throw std::runtime_error("boom");
    return WorkResult{};
  };
  for (std::size_t workers : {1, 4}) {
    try {
      evaluate_batch(orders, BatchOptions{workers, {}}, fn);
      FAIL() << "expected BatchError";
    } catch (const BatchError& e) {
      EXPECT_EQ(e.generation(), 7);
      EXPECT_EQ(e.agent_id(), 2);
      EXPECT_TRUE(e.sample_index() == 13 || e.sample_index() == 40);
      EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
    }
  }
}

TEST(EvaluateBatch, IndependentOfWorkerCountAndClaimOrder) {
  const auto objective = make_walker_objective(WalkerConfig::trap_walker());
  const NoiseTable table(3, 100000);
  SeededRng rng(1);
  const auto theta = objective.initial_theta(rng);
  std::vector<WorkOrder> orders(64);
  for (std::size_t i = 0; i < orders.size(); ++i) {
    orders[i] = WorkOrder{1, 0, i, table.sample_ref(rng, theta.dim()), episode_seed_for(5, 1, 0, i)};
  }
  const auto eval = [&](const WorkOrder& o) {
    const auto r = objective.evaluate(table.perturb(theta, o.perturbation, 0.02).view(), o.episode_seed);
    WorkResult w;
    w.fitness = r.total_reward;
    w.behavior = r.behavior;
    return w;
  };
  const auto base = evaluate_batch(orders, BatchOptions{1, {}}, eval);
  for (std::size_t workers : {2, 8}) {
    for (std::uint64_t shuffle : {1u, 2u, 3u}) {
      const auto other = evaluate_batch(orders, BatchOptions{workers, shuffle}, eval);
      for (std::size_t i = 0; i < base.size(); ++i) {
        ASSERT_EQ(other[i].sample_index, i);
        ASSERT_EQ(other[i].fitness, base[i].fitness);
        ASSERT_EQ(other[i].behavior, base[i].behavior);
      }
    }
  }
}

TEST(Search, WorkerCountDoesNotChangeTheRun) {
  const auto objective = make_walker_objective(WalkerConfig::trap_walker());
  const NoiseTable table(3, 100000);
  SearchParams p;
  p.algorithm = Algorithm::nsra_es;
  p.population = 30;
  p.meta_population = 3;
  p.eval_episodes = 4;
  p.eval_every = 3;
  p.t_w = 2;
  p.run_seed = 17;
  SearchParams q = p;
  q.batch = BatchOptions{8, 99};
  Search<PolicyObjective<Walker>> a(objective, p, table), b(objective, q, table);
  for (int g = 0; g < 10; ++g) {
    const auto sa = a.step(), sb = b.step();
    ASSERT_EQ(sa.gradient, sb.gradient);
  }
  EXPECT_EQ(a.state(), b.state());
}

TEST(EpisodeSeeds, DistinctPerWorkItem) {
  std::set<std::uint64_t> seeds;
  for (std::int64_t g = 0; g < 10; ++g)
    for (std::int64_t m = 0; m < 5; ++m)
      for (std::size_t i = 0; i < 100; ++i) seeds.insert(episode_seed_for(1, g, m, i));
  EXPECT_EQ(seeds.size(), 5000u);
}
