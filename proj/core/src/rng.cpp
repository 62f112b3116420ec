#include "bayatt/rng.hpp"

#include <cmath>
#include <numbers>

#include "bayatt/error.hpp"

namespace bayatt {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view label, std::uint64_t counter)
    : seed_(seed), label_(label), counter_(counter) {
  key_ = mix64(mix64(seed + kGolden) ^ fnv1a(label_));
}

RngStream RngStream::derive(std::string_view sublabel) const {
  std::string child = label_;
  child += '/';
  child += sublabel;
  return RngStream(seed_, child);
}

std::uint64_t RngStream::next_u64() { return mix64(key_ + (++counter_) * kGolden); }

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  require_contract(n > 0, "uniform_index: n must be positive");
  // Desk-scale n; modulo bias is below any tolerance we test at.
  return static_cast<std::size_t>(next_u64() % n);
}

double RngStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log1p(-u1));  // u1 in [0,1) keeps the log finite
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor normal_sample(RngStream& stream, Tensor::Shape shape, double mean, double std) {
  require_contract(std >= 0.0, "normal_sample: std must be >= 0");
  const std::size_t n = Tensor::shape_size(shape);
  if (std == 0.0) return Tensor::full(std::move(shape), mean);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = mean + std * stream.normal();
  return Tensor::unchecked(std::move(shape), std::move(out));
}

}  // namespace bayatt
