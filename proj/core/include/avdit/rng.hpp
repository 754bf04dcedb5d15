#pragma once

#include <cstdint>

#include "avdit/tensor.hpp"

namespace avdit {

// Counter-based generator: value k of stream s under seed is a pure hash of
// (seed, s, k), so streams can be split and consumed in any order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  // Independent child stream.
  CounterRng split(std::uint64_t stream) const;

  std::uint64_t next_u64();
  // Uniform in the open interval (0, 1).
  double uniform();
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

// Standard-normal tensor; element i depends only on (seed, stream, i).
Tensor gaussian_noise(const Shape& shape, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace avdit
