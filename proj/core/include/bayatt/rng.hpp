#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "bayatt/tensor.hpp"

namespace bayatt {

/// Counter-based random stream. A draw at (seed, label, counter) is a pure
/// function of those three values, so streams are reproducible across runs
/// and can be split by label without coordination. Gaussians use a
/// Box-Muller transform and consume two counter ticks per draw.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label, std::uint64_t counter = 0);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }
  std::uint64_t counter() const { return counter_; }

  /// Child stream "<label>/<sublabel>", counter reset to zero.
  RngStream derive(std::string_view sublabel) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal draw.
  double normal();

  /// Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::string label_;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// i.i.d. Gaussian tensor. std == 0 returns the constant mean tensor without
/// consuming counter ticks; negative std is a contract violation.
Tensor normal_sample(RngStream& stream, Tensor::Shape shape, double mean, double std);

}  // namespace bayatt
