#include "metab/rng.hpp"

#include "metab/normal.hpp"

#include <cmath>
#include <stdexcept>

namespace metab {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_index) {
  // Decorrelate (seed, index) pairs before expanding into xoshiro state.
  std::uint64_t st = seed ^ (0x9e3779b97f4a7c15ULL * (stream_index + 1));
  st ^= splitmix64(st);
  for (auto& w : s_) w = splitmix64(st);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform_open01() {
  // 53-bit mantissa shifted into (0,1); cannot return an endpoint.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return norm_quantile(uniform_open01()); }

double RngStream::exponential() { return -std::log(uniform_open01()); }

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::domain_error("gamma: shape must be > 0");
  if (shape < 1.0) {
    // boost the shape, then scale back with a uniform power
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform_open01(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace metab
