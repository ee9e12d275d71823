#pragma once

#include <cstddef>
#include <cstdint>

namespace muonlab {

/// Counter-based pseudorandom stream.
///
/// Every draw is a pure function of (seed, stream id, counter), hashed with
/// the SplitMix64 finalizer, so streams are identical across platforms and
/// compilers. `substream(id)` derives an independent stream; drawing from one
/// substream never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  Rng substream(std::uint64_t id) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace muonlab
