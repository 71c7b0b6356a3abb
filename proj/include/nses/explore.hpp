#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "nses/rng.hpp"

namespace nses {

/// P(m) = N_m / sum_j N_j; uniform when every novelty is zero.
inline std::vector<double> selection_probabilities(std::span<const double> novelties) {
  if (novelties.empty()) throw std::invalid_argument("select_agent: empty meta-population");
  double total = 0.0;
  for (double n : novelties) {
    if (!std::isfinite(n)) throw std::invalid_argument("select_agent: non-finite novelty");
    if (n < 0.0) throw std::invalid_argument("select_agent: negative novelty");
    total += n;
  }
  std::vector<double> p(novelties.size());
  if (total == 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
  } else {
    for (std::size_t m = 0; m < p.size(); ++m) p[m] = novelties[m] / total;
  }
  return p;
}

/// Draws one agent index with probability proportional to its novelty.
inline std::size_t select_agent(std::span<const double> novelties, SeededRng& rng) {
  const auto p = selection_probabilities(novelties);
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    cumulative += p[m];
    if (u < cumulative) return m;
  }
  // Rounding can leave the cumulative sum a hair below 1; the last agent with
  // non-zero mass takes the remainder.
  for (std::size_t m = p.size(); m-- > 0;) {
    if (p[m] > 0.0) return m;
  }
  return p.size() - 1;
}

/// Adaptive fitness/novelty trade-off. w weights fitness; 1 - w weights novelty.
struct WeightController {
  double w = 1.0;
  std::size_t t_w = 50;
  double delta_w = 0.05;
  double f_best = -std::numeric_limits<double>::infinity();
  std::size_t t_best = 0;

  bool operator==(const WeightController&) const = default;
};

namespace detail {
// w lives on a 1e-12 grid so repeated +-delta_w lands on the decimal values
// (0.95, 0.9, ..., 0) instead of drifting by an ulp per step.
inline double snap_weight(double w) { return std::clamp(std::round(w * 1e12) / 1e12, 0.0, 1.0); }
}  // namespace detail

/// Raise w on a new best reward; lower it after t_w generations without one.
inline WeightController update_weight(WeightController c, double f_new) {
  if (!std::isfinite(f_new)) throw std::invalid_argument("update_weight: non-finite reward");
  if (f_new > c.f_best) {
    c.w = detail::snap_weight(std::min(1.0, c.w + c.delta_w));
    c.t_best = 0;
    c.f_best = f_new;
  } else {
    ++c.t_best;
  }
  if (c.t_best >= c.t_w) {
    c.w = detail::snap_weight(std::max(0.0, c.w - c.delta_w));
    c.t_best = 0;
  }
  return c;
}

}  // namespace nses
