#pragma once

#include <cstdint>

namespace cpnn {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so sample i can be generated on any thread in any
/// order by giving it stream i.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept;
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;
  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Poisson(mean) by inversion of the CDF.
  int poisson(double mean) noexcept;

  /// Independent generator for a sub-stream (e.g. sample index).
  CounterRng split(std::uint64_t sub_stream) const noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

} // namespace cpnn
