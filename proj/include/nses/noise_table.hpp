#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nses/rng.hpp"
#include "nses/tensor.hpp"

namespace nses {

/// A perturbation is an index into the shared noise block, not a vector.
struct PerturbationRef {
  std::size_t offset = 0;
  std::size_t dim = 0;
  bool mirror = false;  // true selects the negated slice

  bool operator==(const PerturbationRef&) const = default;
};

/// Immutable block of standard-normal draws shared by every worker.
///
/// The block is a pure function of (creation_seed, size). Entries are stored
/// as float to halve the footprint of the default 2.5e7-entry table; every
/// consumer widens them to double before use.
class NoiseTable {
 public:
  static constexpr std::size_t default_size = 25'000'000;

  explicit NoiseTable(std::uint64_t creation_seed, std::size_t size = default_size)
      : seed_(creation_seed), block_(size) {
    if (size == 0) throw std::invalid_argument("NoiseTable: size must be positive");
    SeededRng rng(creation_seed, stream::noise_table);
    for (float& v : block_) v = static_cast<float>(rng.normal());
  }

  NoiseTable(const NoiseTable&) = delete;
  NoiseTable& operator=(const NoiseTable&) = delete;
  NoiseTable(NoiseTable&&) noexcept = default;
  NoiseTable& operator=(NoiseTable&&) noexcept = default;

  std::size_t size() const noexcept { return block_.size(); }
  std::uint64_t creation_seed() const noexcept { return seed_; }
  std::span<const float> block() const noexcept { return block_; }

  std::span<const float> slice(std::size_t offset, std::size_t dim) const {
    if (offset > block_.size() || dim > block_.size() - offset) {
      throw std::out_of_range("NoiseTable::slice: [" + std::to_string(offset) + ", +" +
                              std::to_string(dim) + ") exceeds table of size " +
                              std::to_string(block_.size()));
    }
    return std::span<const float>(block_).subspan(offset, dim);
  }

  /// Draws a uniformly random valid offset.
  PerturbationRef sample_ref(SeededRng& rng, std::size_t dim) const {
    if (dim == 0 || dim > block_.size()) {
      throw std::invalid_argument("NoiseTable::sample_ref: dim " + std::to_string(dim) +
                                  " not in [1, " + std::to_string(block_.size()) + "]");
    }
    const std::size_t offset = rng.uniform_index(block_.size() - dim + 1);
    return {offset, dim, false};
  }

  /// Antithetic pair sharing one offset: (+slice, -slice).
  std::pair<PerturbationRef, PerturbationRef> sample_mirrored_pair(SeededRng& rng,
                                                                  std::size_t dim) const {
    PerturbationRef plus = sample_ref(rng, dim);
    PerturbationRef minus = plus;
    minus.mirror = true;
    return {plus, minus};
  }

  /// epsilon_i reconstructed from its reference.
  std::vector<double> epsilon(const PerturbationRef& ref) const {
    const auto s = slice(ref.offset, ref.dim);
    std::vector<double> out(s.size());
    const double sign = ref.mirror ? -1.0 : 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = sign * static_cast<double>(s[i]);
    return out;
  }

  /// theta + sigma * epsilon(ref). theta is not modified.
  ParameterVector perturb(const ParameterVector& theta, const PerturbationRef& ref,
                          double sigma) const {
    if (ref.dim != theta.dim()) {
      throw std::invalid_argument("NoiseTable::perturb: ref dim " + std::to_string(ref.dim) +
                                  " != theta dim " + std::to_string(theta.dim()));
    }
    if (!(sigma >= 0.0)) throw std::invalid_argument("NoiseTable::perturb: sigma must be >= 0");
    const auto s = slice(ref.offset, ref.dim);
    const double scale = ref.mirror ? -sigma : sigma;
    std::vector<double> out(theta.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * static_cast<double>(s[i]);
    return ParameterVector(std::move(out));
  }

 private:
  std::uint64_t seed_;
  std::vector<float> block_;
};

}  // namespace nses
