#pragma once

#include <cstdint>

namespace metab {

// Splittable xoshiro256++ stream. Substreams are derived from a 64-bit
// master seed and a stream index through a splitmix64 chain, so replication
// m always sees the same draws no matter how work is assigned to threads.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : RngStream(seed, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_index);

  std::uint64_t next_u64();

  // Uniform on the open interval (0,1); never returns 0 or 1.
  double uniform_open01();

  // Standard normal via inverse-CDF of a single uniform.
  double normal();

  // Exponential with unit rate.
  double exponential() ;

  // Gamma(shape, rate 1), Marsaglia-Tsang squeeze; shape > 0.
  double gamma(double shape);

private:
  std::uint64_t s_[4];
};

}  // namespace metab
