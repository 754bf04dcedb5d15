#include "avdit/rng.hpp"

#include <cmath>
#include <numbers>

namespace avdit {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double normal_at(std::uint64_t key, std::uint64_t i) {
  const double u1 = to_open_unit(mix64(key ^ (2 * i)));
  const double u2 = to_open_unit(mix64(key ^ (2 * i + 1)));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(derive_key(seed, stream)) {}

CounterRng CounterRng::split(std::uint64_t stream) const { return CounterRng(key_, stream); }

std::uint64_t CounterRng::next_u64() { return mix64(key_ ^ mix64(counter_++)); }

double CounterRng::uniform() { return to_open_unit(next_u64()); }

double CounterRng::normal() { return normal_at(key_, counter_++ + 0x100000000ULL); }

std::uint64_t CounterRng::below(std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

Tensor gaussian_noise(const Shape& shape, std::uint64_t seed, std::uint64_t stream) {
  Tensor out(shape);
  const std::uint64_t key = derive_key(seed, stream);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(normal_at(key, i));
  return out;
}

}  // namespace avdit
