#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nses/rng.hpp"
#include "nses/tensor.hpp"

namespace nses {

enum class Activation { tanh, relu };
enum class OutputSquash { none, tanh };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
inline const char* to_string(OutputSquash s) { return s == OutputSquash::tanh ? "tanh" : "none"; }

/// Shape of a fully connected policy. Parameters are laid out layer by layer,
/// each layer as a row-major [fan_out x fan_in] weight block followed by its
/// fan_out biases.
struct MlpSpec {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::vector<std::size_t> hidden_layers;
  Activation activation = Activation::tanh;
  OutputSquash output_squash = OutputSquash::none;

  bool operator==(const MlpSpec&) const = default;

  /// Layer widths including input and output.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    w.reserve(hidden_layers.size() + 2);
    w.push_back(input_dim);
    w.insert(w.end(), hidden_layers.begin(), hidden_layers.end());
    w.push_back(output_dim);
    return w;
  }

  std::size_t parameter_count() const {
    const auto w = widths();
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) count += (w[l] + 1) * w[l + 1];
    return count;
  }

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MlpSpec: zero-width io");
    for (std::size_t h : hidden_layers) {
      if (h == 0) throw std::invalid_argument("MlpSpec: zero-width hidden layer");
    }
  }

  std::string canonical() const {
    std::string s = "mlp:" + std::to_string(input_dim);
    for (std::size_t h : hidden_layers) s += "-" + std::to_string(h);
    s += "-" + std::to_string(output_dim) + ":" + to_string(activation) + ":" +
         to_string(output_squash);
    return s;
  }

  /// FNV-1a of canonical(); stored in parameter files to catch shape mismatches.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;  // row-major [fan_out][fan_in]
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

inline std::vector<DenseLayer> unflatten(const MlpSpec& spec, std::span<const double> theta) {
  detail::require_same_dim(theta.size(), spec.parameter_count(), "unflatten");
  const auto w = spec.widths();
  std::vector<DenseLayer> layers;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    DenseLayer layer{w[l], w[l + 1], {}, {}};
    layer.weights.assign(theta.begin() + pos, theta.begin() + pos + w[l] * w[l + 1]);
    pos += w[l] * w[l + 1];
    layer.bias.assign(theta.begin() + pos, theta.begin() + pos + w[l + 1]);
    pos += w[l + 1];
    layers.push_back(std::move(layer));
  }
  return layers;
}

inline std::vector<double> flatten(std::span<const DenseLayer> layers) {
  std::vector<double> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weights.begin(), layer.weights.end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

/// Weights ~ N(0, 1/fan_in), biases zero.
inline ParameterVector init_theta(const MlpSpec& spec, SeededRng& rng) {
  spec.validate();
  const auto w = spec.widths();
  std::vector<double> theta;
  theta.reserve(spec.parameter_count());
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(w[l]));
    for (std::size_t i = 0; i < w[l] * w[l + 1]; ++i) theta.push_back(scale * rng.normal());
    theta.insert(theta.end(), w[l + 1], 0.0);
  }
  return ParameterVector(std::move(theta));
}

namespace detail {
inline double activate(Activation a, double x) {
  return a == Activation::tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}
}  // namespace detail

/// Reusable forward pass over a borrowed parameter span. Holds scratch
/// buffers, so one instance per thread.
class MlpEvaluator {
 public:
  MlpEvaluator(const MlpSpec& spec, std::span<const double> theta)
      : spec_(spec), widths_(spec.widths()), theta_(theta) {
    detail::require_same_dim(theta.size(), spec.parameter_count(), "MlpEvaluator theta");
    std::size_t widest = 0;
    for (std::size_t w : widths_) widest = std::max(widest, w);
    a_.resize(widest);
    b_.resize(widest);
  }

  std::span<const double> operator()(std::span<const double> observation) {
    detail::require_same_dim(observation.size(), spec_.input_dim, "forward observation");
    std::copy(observation.begin(), observation.end(), a_.begin());
    std::size_t pos = 0;
    const std::size_t layers = widths_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t fan_in = widths_[l];
      const std::size_t fan_out = widths_[l + 1];
      const double* weights = theta_.data() + pos;
      const double* bias = weights + fan_in * fan_out;
      const bool last = l + 1 == layers;
      for (std::size_t o = 0; o < fan_out; ++o) {
        double sum = bias[o];
        const double* row = weights + o * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) sum += row[i] * a_[i];
        if (!last) {
          b_[o] = detail::activate(spec_.activation, sum);
        } else {
          b_[o] = spec_.output_squash == OutputSquash::tanh ? std::tanh(sum) : sum;
        }
      }
      pos += fan_in * fan_out + fan_out;
      std::swap(a_, b_);
    }
    return std::span<const double>(a_).first(spec_.output_dim);
  }

 private:
  const MlpSpec& spec_;
  std::vector<std::size_t> widths_;
  std::span<const double> theta_;
  std::vector<double> a_;
  std::vector<double> b_;
};

/// pi_theta: a spec plus a matching parameter vector.
class Policy {
 public:
  Policy(MlpSpec spec, ParameterVector theta) : spec_(std::move(spec)), theta_(std::move(theta)) {
    spec_.validate();
    detail::require_same_dim(theta_.dim(), spec_.parameter_count(), "Policy theta");
  }

  const MlpSpec& spec() const noexcept { return spec_; }
  const ParameterVector& theta() const noexcept { return theta_; }

  std::vector<double> forward(std::span<const double> observation) const {
    if (!all_finite(observation)) throw std::invalid_argument("Policy::forward: non-finite input");
    MlpEvaluator eval(spec_, theta_.view());
    const auto out = eval(observation);
    return {out.begin(), out.end()};
  }

 private:
  MlpSpec spec_;
  ParameterVector theta_;
};

// Binary checkpoint: "NSESPARM", u32 version, u32 reserved, u64 dim,
// u64 spec hash, then dim little-endian float64 values.
inline constexpr std::array<char, 8> parameter_file_magic = {'N', 'S', 'E', 'S', 'P', 'A', 'R', 'M'};
inline constexpr std::uint32_t parameter_file_version = 1;

struct ParameterFile {
  std::uint64_t spec_hash = 0;
  ParameterVector theta;
};

namespace detail {
template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw std::runtime_error("parameter file truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}
}  // namespace detail

inline void save_parameters(const std::filesystem::path& path, const MlpSpec& spec,
                            const ParameterVector& theta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(parameter_file_magic.data(), parameter_file_magic.size());
  detail::write_le<std::uint32_t>(out, parameter_file_version);
  detail::write_le<std::uint32_t>(out, 0);
  detail::write_le<std::uint64_t>(out, theta.dim());
  detail::write_le<std::uint64_t>(out, spec.hash());
  for (double v : theta.values()) detail::write_le<double>(out, v);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline ParameterFile load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != parameter_file_magic) throw std::runtime_error("bad parameter file magic");
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != parameter_file_version) throw std::runtime_error("unsupported parameter file version");
  detail::read_le<std::uint32_t>(in);
  const auto dim = detail::read_le<std::uint64_t>(in);
  ParameterFile file;
  file.spec_hash = detail::read_le<std::uint64_t>(in);
  std::vector<double> values(dim);
  for (auto& v : values) v = detail::read_le<double>(in);
  file.theta = ParameterVector(std::move(values));
  return file;
}

}  // namespace nses
