#include "gpuprof/aggregator/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpuprof/error.hpp"

namespace gpuprof::aggregator {

void Accumulator::add(std::uint64_t v) {
  min = n == 0 ? v : std::min(min, v);
  max = n == 0 ? v : std::max(max, v);
  ++n;
  sum += v;
  sum_sq += U256(v) * v;
}

void Accumulator::merge(const Accumulator& o) {
  if (o.n == 0) return;
  min = n == 0 ? o.min : std::min(min, o.min);
  max = n == 0 ? o.max : std::max(max, o.max);
  n += o.n;
  sum += o.sum;
  sum_sq += o.sum_sq;
}

Stats finalize(const Accumulator& a) {
  Stats s;
  if (a.n == 0) return s;
  if (a.sum > std::numeric_limits<std::uint64_t>::max())
    throw Error(Errc::ConfigError, "metric sum exceeds 64 bits");
  s.n = a.n;
  s.sum = static_cast<std::uint64_t>(a.sum);
  s.min = a.min;
  s.max = a.max;
  s.mean = static_cast<double>(s.sum) / static_cast<double>(a.n);
  // n^2 var = n * sum_sq - sum^2, exact and never negative.
  const U256 sum(s.sum);
  const U256 num = U256(a.n) * a.sum_sq - sum * sum;
  const double n2 = static_cast<double>(a.n) * static_cast<double>(a.n);
  s.stddev = std::sqrt(num.convert_to<double>() / n2);
  s.cv = s.mean == 0 ? 0 : s.stddev / s.mean;
  return s;
}

}  // namespace gpuprof::aggregator
