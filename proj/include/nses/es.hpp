#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nses/behavior.hpp"
#include "nses/noise_table.hpp"
#include "nses/tensor.hpp"

namespace nses {

enum class Algorithm { es, ns_es, nsr_es, nsra_es };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::es: return "es";
    case Algorithm::ns_es: return "ns-es";
    case Algorithm::nsr_es: return "nsr-es";
    case Algorithm::nsra_es: return "nsra-es";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "es") return Algorithm::es;
  if (s == "ns-es") return Algorithm::ns_es;
  if (s == "nsr-es") return Algorithm::nsr_es;
  if (s == "nsra-es") return Algorithm::nsra_es;
  throw std::invalid_argument("unknown algorithm: " + s);
}

inline bool uses_novelty(Algorithm a) { return a != Algorithm::es; }
inline bool uses_fitness(Algorithm a) { return a != Algorithm::ns_es; }

/// Everything measured for the n perturbations of one generation, aligned by
/// sample index.
struct GenerationBatch {
  std::vector<PerturbationRef> refs;
  std::vector<double> fitness;
  std::vector<double> novelty;                   // empty for plain ES
  std::vector<BehaviorDescriptor> behaviors;     // only when retained
};

/// g = (1 / (n sigma)) sum_i w_i eps_i, accumulated in index order so the
/// result does not depend on how the batch was evaluated.
inline ParameterVector estimate_gradient(std::span<const double> weights,
                                         std::span<const PerturbationRef> refs, double sigma,
                                         const NoiseTable& table) {
  if (!(sigma > 0.0)) throw std::invalid_argument("estimate_gradient: sigma must be > 0");
  if (weights.empty()) throw std::invalid_argument("estimate_gradient: empty batch");
  if (weights.size() != refs.size()) throw std::invalid_argument("estimate_gradient: weights/refs size mismatch");
  if (!all_finite(weights)) throw std::invalid_argument("estimate_gradient: non-finite weight");

  const std::size_t dim = refs.front().dim;
  std::vector<double> g(dim, 0.0);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].dim != dim) throw std::invalid_argument("estimate_gradient: ragged perturbation dims");
    if (weights[i] == 0.0) continue;
    const auto slice = table.slice(refs[i].offset, dim);
    const double wi = refs[i].mirror ? -weights[i] : weights[i];
    for (std::size_t j = 0; j < dim; ++j) g[j] += wi * static_cast<double>(slice[j]);
  }
  const double scale = 1.0 / (static_cast<double>(refs.size()) * sigma);
  for (double& v : g) v *= scale;
  return ParameterVector(std::move(g));
}

/// Per-sample weights for one generation from the centered ranks of fitness
/// and novelty:
///   es      -> rank(f)
///   ns-es   -> rank(N)
///   nsr-es  -> (rank(f) + rank(N)) / 2
///   nsra-es -> w rank(f) + (1 - w) rank(N)
inline std::vector<double> sample_weights(Algorithm algorithm, std::span<const double> fitness,
                                          std::span<const double> novelty, double w = 1.0) {
  switch (algorithm) {
    case Algorithm::es:
      return centered_ranks(fitness);
    case Algorithm::ns_es:
      return centered_ranks(novelty);
    case Algorithm::nsr_es: {
      const auto rf = centered_ranks(fitness);
      const auto rn = centered_ranks(novelty);
      std::vector<double> out(rf.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (rf[i] + rn[i]) / 2.0;
      return out;
    }
    case Algorithm::nsra_es: {
      if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("sample_weights: w outside [0, 1]");
      const auto rf = centered_ranks(fitness);
      const auto rn = centered_ranks(novelty);
      std::vector<double> out(rf.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * rf[i] + (1.0 - w) * rn[i];
      return out;
    }
  }
  throw std::logic_error("sample_weights: bad algorithm");
}

}  // namespace nses
