#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nses/tensor.hpp"

namespace nses {

enum class BehaviorKind { final_position, trajectory };

inline const char* to_string(BehaviorKind k) {
  return k == BehaviorKind::final_position ? "final_position" : "trajectory";
}

inline BehaviorKind behavior_kind_from_string(const std::string& s) {
  if (s == "final_position") return BehaviorKind::final_position;
  if (s == "trajectory") return BehaviorKind::trajectory;
  throw std::invalid_argument("unknown behavior kind: " + s);
}

/// b(pi): either a final 2-D position or a sequence of equal-width states,
/// stored flat (steps * state_dim values).
class BehaviorDescriptor {
 public:
  BehaviorDescriptor() = default;

  static BehaviorDescriptor final_position(double x, double y) {
    return BehaviorDescriptor(BehaviorKind::final_position, 2, {x, y});
  }

  static BehaviorDescriptor trajectory(std::size_t state_dim, std::vector<double> flat_states) {
    if (state_dim == 0 || flat_states.empty() || flat_states.size() % state_dim != 0) {
      throw std::invalid_argument("trajectory descriptor: need a non-empty whole number of states");
    }
    return BehaviorDescriptor(BehaviorKind::trajectory, state_dim, std::move(flat_states));
  }

  static BehaviorDescriptor trajectory(const std::vector<std::vector<double>>& states) {
    if (states.empty()) throw std::invalid_argument("trajectory descriptor: empty");
    std::vector<double> flat;
    const std::size_t dim = states.front().size();
    for (const auto& s : states) {
      if (s.size() != dim) throw std::invalid_argument("trajectory descriptor: ragged states");
      flat.insert(flat.end(), s.begin(), s.end());
    }
    return trajectory(dim, std::move(flat));
  }

  BehaviorKind kind() const noexcept { return kind_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  std::size_t steps() const noexcept { return state_dim_ == 0 ? 0 : data_.size() / state_dim_; }
  std::span<const double> data() const noexcept { return data_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> state(std::size_t t) const {
    return std::span<const double>(data_).subspan(t * state_dim_, state_dim_);
  }

  bool operator==(const BehaviorDescriptor&) const = default;

 private:
  BehaviorDescriptor(BehaviorKind kind, std::size_t state_dim, std::vector<double> data)
      : kind_(kind), state_dim_(state_dim), data_(std::move(data)) {
    if (!all_finite(data_)) throw std::invalid_argument("behavior descriptor: non-finite value");
  }

  BehaviorKind kind_ = BehaviorKind::final_position;
  std::size_t state_dim_ = 0;
  std::vector<double> data_;
};

/// final_position: squared Euclidean distance.
/// trajectory: sum over timesteps of the per-step L2 distance, the shorter
/// trajectory padded with its last state; not normalized by length.
inline double bc_distance(const BehaviorDescriptor& a, const BehaviorDescriptor& b) {
  if (a.kind() != b.kind()) throw std::invalid_argument("bc_distance: kind mismatch");
  if (a.state_dim() != b.state_dim()) throw std::invalid_argument("bc_distance: state dim mismatch");
  if (a.empty() || b.empty()) throw std::invalid_argument("bc_distance: empty descriptor");
  if (a.kind() == BehaviorKind::final_position) return squared_l2_distance(a.data(), b.data());

  const std::size_t steps = std::max(a.steps(), b.steps());
  double sum = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    sum += l2_distance(a.state(std::min(t, a.steps() - 1)), b.state(std::min(t, b.steps() - 1)));
  }
  return sum;
}

/// Append-only archive A with exact k-nearest-neighbour novelty.
class Archive {
 public:
  Archive(BehaviorKind kind, std::size_t k) : kind_(kind), k_(k) {
    if (k == 0) throw std::invalid_argument("Archive: k must be positive");
  }

  BehaviorKind kind() const noexcept { return kind_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<BehaviorDescriptor>& entries() const noexcept { return entries_; }

  void add(BehaviorDescriptor b) {
    if (b.kind() != kind_) throw std::invalid_argument("Archive::add: kind mismatch");
    if (!entries_.empty() && b.state_dim() != entries_.front().state_dim()) {
      throw std::invalid_argument("Archive::add: state dim mismatch");
    }
    entries_.push_back(std::move(b));
  }

  /// Mean distance to the min(k, |A|) nearest entries. Neighbours are ordered
  /// by (distance, insertion index) and summed in that order.
  double novelty(const BehaviorDescriptor& b) const {
    if (entries_.empty()) throw std::invalid_argument("Archive::novelty: empty archive");
    if (b.kind() != kind_) throw std::invalid_argument("Archive::novelty: kind mismatch");
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) dist.emplace_back(bc_distance(b, entries_[i]), i);
    const std::size_t count = std::min(k_, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(count), dist.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < count; ++j) sum += dist[j].first;
    return sum / static_cast<double>(count);
  }

  bool operator==(const Archive&) const = default;

 private:
  BehaviorKind kind_;
  std::size_t k_;
  std::vector<BehaviorDescriptor> entries_;
};

// JSON-lines archive file: a header record {"kind", "k", "state_dim", "size"}
// followed by one {"data": [...]} record per entry. Trajectory data is a list
// of state lists.

inline nlohmann::json to_json(const BehaviorDescriptor& b) {
  if (b.kind() == BehaviorKind::final_position) {
    return {{"data", std::vector<double>(b.data().begin(), b.data().end())}};
  }
  nlohmann::json states = nlohmann::json::array();
  for (std::size_t t = 0; t < b.steps(); ++t) {
    const auto s = b.state(t);
    states.push_back(std::vector<double>(s.begin(), s.end()));
  }
  return {{"data", std::move(states)}};
}

inline BehaviorDescriptor behavior_from_json(BehaviorKind kind, const nlohmann::json& j) {
  const auto& data = j.at("data");
  if (kind == BehaviorKind::final_position) {
    const auto xy = data.get<std::vector<double>>();
    if (xy.size() != 2) throw std::invalid_argument("final_position record must have 2 values");
    return BehaviorDescriptor::final_position(xy[0], xy[1]);
  }
  return BehaviorDescriptor::trajectory(data.get<std::vector<std::vector<double>>>());
}

inline void save_archive(const std::filesystem::path& path, const Archive& archive) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::size_t state_dim = archive.empty() ? 0 : archive.entries().front().state_dim();
  out << nlohmann::json{{"kind", to_string(archive.kind())},
                        {"k", archive.k()},
                        {"state_dim", state_dim},
                        {"size", archive.size()}}
             .dump()
      << '\n';
  for (const auto& e : archive.entries()) out << to_json(e).dump() << '\n';
}

inline Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("archive file missing header");
  const auto header = nlohmann::json::parse(line);
  Archive archive(behavior_kind_from_string(header.at("kind").get<std::string>()),
                  header.at("k").get<std::size_t>());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    archive.add(behavior_from_json(archive.kind(), nlohmann::json::parse(line)));
  }
  if (archive.size() != header.at("size").get<std::size_t>()) {
    throw std::runtime_error("archive file truncated");
  }
  return archive;
}

}  // namespace nses
