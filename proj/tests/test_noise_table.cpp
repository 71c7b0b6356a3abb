#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nses/noise_table.hpp"

using namespace nses;

TEST(NoiseTable, DeterministicInSeed) {
  const NoiseTable a(9, 10000), b(9, 10000), c(10, 10000);
  EXPECT_TRUE(std::equal(a.block().begin(), a.block().end(), b.block().begin()));
  EXPECT_FALSE(std::equal(a.block().begin(), a.block().end(), c.block().begin()));
}

TEST(NoiseTable, StandardNormalMoments) {
  const NoiseTable t(1, 1'000'000);
  double sum = 0.0, sq = 0.0, quart = 0.0;
  for (float v : t.block()) {
    sum += v;
    sq += static_cast<double>(v) * v;
    quart += std::pow(static_cast<double>(v), 4);
  }
  const double n = static_cast<double>(t.size());
  EXPECT_NEAR(sum / n, 0.0, 0.005);
  EXPECT_NEAR(sq / n, 1.0, 0.005);
  EXPECT_NEAR(quart / n, 3.0, 0.05);
}

TEST(NoiseTable, SliceBounds) {
  const NoiseTable t(1, 100);
  EXPECT_EQ(t.slice(90, 10).size(), 10u);
  EXPECT_THROW(t.slice(91, 10), std::out_of_range);
  EXPECT_THROW(t.slice(101, 0), std::out_of_range);
}

TEST(NoiseTable, SampleRefStaysInBounds) {
  const NoiseTable t(1, 50);
  SeededRng rng(2);
  bool saw_last = false;
  for (int i = 0; i < 5000; ++i) {
    const auto r = t.sample_ref(rng, 10);
    ASSERT_LE(r.offset + r.dim, t.size());
    saw_last |= r.offset == 40;
  }
  EXPECT_TRUE(saw_last);
  EXPECT_THROW(t.sample_ref(rng, 51), std::invalid_argument);
  EXPECT_THROW(t.sample_ref(rng, 0), std::invalid_argument);
}

TEST(NoiseTable, PerturbIsThetaPlusSigmaEpsilon) {
  const NoiseTable t(4, 1000);
  SeededRng rng(8);
  const auto ref = t.sample_ref(rng, 5);
  const ParameterVector theta{1, 2, 3, 4, 5};
  const auto p = t.perturb(theta, ref, 0.25);
  const auto eps = t.epsilon(ref);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(p[i], theta[i] + 0.25 * static_cast<double>(t.block()[ref.offset + i]));
    EXPECT_EQ(eps[i], static_cast<double>(t.block()[ref.offset + i]));
  }
  EXPECT_EQ(theta, (ParameterVector{1, 2, 3, 4, 5}));
}

TEST(NoiseTable, MirroredPairNegates) {
  const NoiseTable t(4, 1000);
  SeededRng rng(8);
  const auto [plus, minus] = t.sample_mirrored_pair(rng, 6);
  EXPECT_EQ(plus.offset, minus.offset);
  const auto ep = t.epsilon(plus), em = t.epsilon(minus);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(ep[i], -em[i]);
  const ParameterVector theta(6);
  const auto a = t.perturb(theta, plus, 0.1), b = t.perturb(theta, minus, 0.1);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a[i], -b[i]);
}

TEST(NoiseTable, DimMismatchRejected) {
  const NoiseTable t(4, 1000);
  SeededRng rng(8);
  const auto ref = t.sample_ref(rng, 3);
  EXPECT_THROW(t.perturb(ParameterVector(4), ref, 0.1), std::invalid_argument);
}
