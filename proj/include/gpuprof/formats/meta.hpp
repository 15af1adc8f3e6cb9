#pragma once

// The database meta file: load modules, profiles, metric descriptors, the
// expanded context tree and per-context statistics. JSON; see FORMATS.md.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpuprof/aggregator/statistics.hpp"
#include "gpuprof/core/context.hpp"
#include "gpuprof/core/model.hpp"
#include "gpuprof/formats/sparse_db.hpp"

namespace gpuprof::formats {

inline constexpr int kMetaVersion = 1;

struct DbProfile {
  ProfileIdTuple id;
  std::string source;  // measurement file name
  std::optional<std::string> trace;  // path relative to the database

  bool operator==(const DbProfile&) const = default;
};

/// Database metric `2r` is the inclusive and `2r + 1` the exclusive
/// variant of measured metric number r.
struct DbMetric {
  DbMetricId id = 0;
  std::string name;  // measured metric name
  MetricId base = 0;
  bool inclusive = true;
  KindId kind = 0;
  Combine combine = Combine::Sum;

  bool operator==(const DbMetric&) const = default;
};

inline DbMetricId inclusive_id(std::size_t r) { return static_cast<DbMetricId>(2 * r); }
inline DbMetricId exclusive_id(std::size_t r) { return static_cast<DbMetricId>(2 * r + 1); }

struct Meta {
  std::vector<LoadModule> modules;
  std::vector<DbProfile> profiles;
  std::vector<DbMetric> metrics;
  ContextTree contexts;
  /// stats[c] maps database metric ids to statistics at context c.
  std::vector<std::map<DbMetricId, aggregator::Stats>> stats;

  CubeShape shape() const {
    return {static_cast<std::uint32_t>(profiles.size()), static_cast<std::uint32_t>(contexts.size()),
            static_cast<std::uint32_t>(metrics.size())};
  }
  const DbMetric* find_metric(const std::string& name, bool inclusive) const;
  const LoadModule* find_module(ModuleId id) const;

  bool operator==(const Meta&) const = default;
};

std::string write_meta(const Meta& meta);
/// Throws CorruptFile on malformed or inconsistent content.
Meta read_meta(const std::string& text);

}  // namespace gpuprof::formats
