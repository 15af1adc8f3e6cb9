#pragma once

// Per-context summary statistics over profiles, accumulated in exact
// integer arithmetic so that merge order cannot change the result.

#include <cstdint>

#include <boost/multiprecision/cpp_int.hpp>

namespace gpuprof::aggregator {

using U256 = boost::multiprecision::uint256_t;

/// Running statistics of the non-zero values one context/metric received.
struct Accumulator {
  std::uint64_t n = 0;
  unsigned __int128 sum = 0;
  U256 sum_sq = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;

  void add(std::uint64_t v);
  void merge(const Accumulator& o);
  bool operator==(const Accumulator&) const = default;
};

/// Population statistics; cv is 0 when the mean is 0.
struct Stats {
  std::uint64_t n = 0;
  std::uint64_t sum = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  double mean = 0;
  double stddev = 0;
  double cv = 0;

  bool operator==(const Stats&) const = default;
};

/// Throws ConfigError if the sum does not fit 64 bits.
Stats finalize(const Accumulator& a);

}  // namespace gpuprof::aggregator
