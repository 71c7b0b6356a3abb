#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nses {

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// Flat genome of a policy network. Every entry is finite.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t dim) : values_(dim, 0.0) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {
    if (!all_finite(values_)) throw std::invalid_argument("ParameterVector: non-finite entry");
  }
  ParameterVector(std::initializer_list<double> values) : ParameterVector(std::vector<double>(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> view() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const ParameterVector&) const = default;

 private:
  std::vector<double> values_;
};

namespace detail {
inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}
}  // namespace detail

inline double squared_l2_distance(std::span<const double> a, std::span<const double> b) {
  detail::require_same_dim(a.size(), b.size(), "squared_l2_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  detail::require_same_dim(a.size(), b.size(), "l2_distance");
  return std::sqrt(squared_l2_distance(a, b));
}

/// Centered rank transform: rank / (n - 1) - 0.5 with ranks ascending from 0.
/// Tied scores share the mean of the ranks they span, so the output always
/// sums to zero and lies in [-0.5, 0.5]. Output order follows input order.
inline std::vector<double> centered_ranks(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw std::invalid_argument("centered_ranks: need at least two scores");
  if (!all_finite(scores)) throw std::invalid_argument("centered_ranks: non-finite score");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> out(n);
  const double denom = static_cast<double>(n - 1);
  std::size_t begin = 0;
  while (begin < n) {
    std::size_t end = begin + 1;
    while (end < n && scores[order[end]] == scores[order[begin]]) ++end;
    // Mean of the integer ranks begin..end-1.
    const double rank = 0.5 * static_cast<double>(begin + end - 1);
    const double value = rank / denom - 0.5;
    for (std::size_t j = begin; j < end; ++j) out[order[j]] = value;
    begin = end;
  }
  return out;
}

struct AdamConfig {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// Adam moments for one parameter vector. Updated only by adam_step.
struct AdamState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;

  static AdamState fresh(std::size_t dim, AdamConfig config = {}) {
    return AdamState{config, std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0), 0};
  }

  bool operator==(const AdamState&) const = default;
};

struct AdamResult {
  AdamState state;
  ParameterVector theta;
};

/// One Adam ascent step: theta + alpha * m_hat / (sqrt(v_hat) + eps).
inline AdamResult adam_step(const AdamState& state, const ParameterVector& theta,
                            std::span<const double> gradient) {
  const std::size_t dim = theta.dim();
  detail::require_same_dim(gradient.size(), dim, "adam_step gradient");
  detail::require_same_dim(state.first_moment.size(), dim, "adam_step first moment");
  detail::require_same_dim(state.second_moment.size(), dim, "adam_step second moment");
  if (!all_finite(gradient)) throw std::invalid_argument("adam_step: non-finite gradient entry");

  const AdamConfig& c = state.config;
  AdamState next = state;
  next.step_count = state.step_count + 1;
  const double t = static_cast<double>(next.step_count);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  std::vector<double> updated(theta.values());
  for (std::size_t i = 0; i < dim; ++i) {
    next.first_moment[i] = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * gradient[i];
    next.second_moment[i] =
        c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * gradient[i] * gradient[i];
    const double m_hat = next.first_moment[i] / bias1;
    const double v_hat = next.second_moment[i] / bias2;
    updated[i] += c.alpha * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
  return {std::move(next), ParameterVector(std::move(updated))};
}

}  // namespace nses
