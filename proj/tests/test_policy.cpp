#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "nses/policy.hpp"

using namespace nses;

TEST(MlpSpec, ParameterCount) {
  const MlpSpec walker{5, 2, {16, 16}, Activation::tanh, OutputSquash::tanh};
  EXPECT_EQ(walker.parameter_count(), 6u * 16 + 17u * 16 + 17u * 2);
  const MlpSpec linear{3, 2, {}, Activation::tanh, OutputSquash::none};
  EXPECT_EQ(linear.parameter_count(), 8u);
}

TEST(MlpSpec, HashDependsOnShape) {
  const MlpSpec a{5, 2, {16, 16}, Activation::tanh, OutputSquash::tanh};
  MlpSpec b = a;
  EXPECT_EQ(a.hash(), b.hash());
  b.hidden_layers = {16, 8};
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.activation = Activation::relu;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Mlp, HandComputedOneTwoOne) {
  // x -> h = tanh(W1 x + b1) -> y = W2 h + b2
  const MlpSpec spec{1, 1, {2}, Activation::tanh, OutputSquash::none};
  // W1 = [0.5; -1], b1 = [0.1, 0.2], W2 = [2, 3], b2 = [-0.5]
  const ParameterVector theta{0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.5};
  const Policy p(spec, theta);
  const double x = 0.7;
  const double expected = 2.0 * std::tanh(0.5 * x + 0.1) + 3.0 * std::tanh(-x + 0.2) - 0.5;
  EXPECT_DOUBLE_EQ(p.forward(std::vector<double>{x})[0], expected);
}

TEST(Mlp, ReluAndOutputSquash) {
  const MlpSpec spec{1, 1, {2}, Activation::relu, OutputSquash::tanh};
  const ParameterVector theta{0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.5};
  const Policy p(spec, theta);
  const double x = 0.7;
  const double expected = std::tanh(2.0 * std::max(0.0, 0.5 * x + 0.1) + 3.0 * std::max(0.0, -x + 0.2) - 0.5);
  EXPECT_DOUBLE_EQ(p.forward(std::vector<double>{x})[0], expected);
}

TEST(Mlp, FlattenUnflattenRoundTrip) {
  const MlpSpec spec{5, 2, {16, 16}, Activation::tanh, OutputSquash::tanh};
  SeededRng rng(1);
  const auto theta = init_theta(spec, rng);
  const auto layers = unflatten(spec, theta.view());
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(flatten(layers), theta.values());
  EXPECT_THROW(unflatten(spec, std::vector<double>(10)), std::invalid_argument);
}

TEST(Mlp, EvaluatorMatchesPolicy) {
  const MlpSpec spec{5, 2, {16, 16}, Activation::tanh, OutputSquash::tanh};
  SeededRng rng(2);
  const auto theta = init_theta(spec, rng);
  const Policy p(spec, theta);
  MlpEvaluator eval(spec, theta.view());
  const std::vector<double> obs{0.1, -0.2, 0.3, 0.0, 1.0};
  const auto a = p.forward(obs);
  const auto b = eval(obs);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
}

TEST(Mlp, InitMoments) {
  // Weights ~ N(0, 1/fan_in), biases zero.
  const MlpSpec spec{64, 64, {}, Activation::tanh, OutputSquash::none};
  SeededRng rng(3);
  const auto theta = init_theta(spec, rng);
  const auto layers = unflatten(spec, theta.view());
  double sum = 0.0, sq = 0.0;
  for (double w : layers[0].weights) {
    sum += w;
    sq += w * w;
  }
  const double n = static_cast<double>(layers[0].weights.size());
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0 / 64, 0.1 / 64);
  for (double b : layers[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(ParameterFile, RoundTripAndHeader) {
  const MlpSpec spec{5, 2, {16, 16}, Activation::tanh, OutputSquash::tanh};
  SeededRng rng(4);
  const auto theta = init_theta(spec, rng);
  const auto path = std::filesystem::temp_directory_path() / "nses_test_params.bin";
  save_parameters(path, spec, theta);
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 4 + 4 + 8 + 8 + 8 * theta.dim());
  const auto file = load_parameters(path);
  EXPECT_EQ(file.spec_hash, spec.hash());
  EXPECT_EQ(file.theta, theta);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_THROW(load_parameters(path), std::runtime_error);
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(load_parameters(path), std::runtime_error);
  std::filesystem::remove(path);
}
