#pragma once

// Read-only access to an aggregated database directory.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gpuprof/core/context.hpp"
#include "gpuprof/formats/meta.hpp"
#include "gpuprof/formats/sparse_db.hpp"

namespace gpuprof::analysis {

using formats::DbMetricId;

struct TraceLine {
  std::size_t profile = 0;
  ProfileIdTuple id;
  std::vector<TraceRecord> records;  // cct_node_id holds a context id
};

/// Immutable after open; safe for concurrent readers.
class Database {
 public:
  /// Throws IoError or CorruptFile. Trace lines must be in timestamp order.
  static Database open(const std::string& dir);

  const std::string& dir() const { return dir_; }
  const formats::Meta& meta() const { return *meta_; }
  const ContextTree& tree() const { return meta_->contexts; }
  const formats::PmsFile& pms() const { return *pms_; }
  const formats::CmsFile& cms() const { return *cms_; }
  const std::vector<TraceLine>& traces() const { return *traces_; }

  /// Throws UnknownContext.
  const ContextNode& context(ContextId c) const;
  /// Throws UnknownMetric.
  const formats::DbMetric& metric(const std::string& name, bool inclusive) const;
  const formats::DbMetric& metric(DbMetricId id) const;

  /// Sum over profiles; 0 when absent. Throws UnknownContext.
  std::uint64_t sum(ContextId c, DbMetricId m) const;
  std::optional<aggregator::Stats> stats(ContextId c, DbMetricId m) const;

  std::string label(ContextId c) const;
  /// Nearest enclosing routine context (the context itself when it is a
  /// routine); kNoNode for contexts outside any routine.
  ContextId owner(ContextId c) const { return owner_->at(c); }

 private:
  std::string dir_;
  std::shared_ptr<const formats::Meta> meta_;
  std::shared_ptr<const formats::PmsFile> pms_;
  std::shared_ptr<const formats::CmsFile> cms_;
  std::shared_ptr<const std::vector<TraceLine>> traces_;
  std::shared_ptr<const std::vector<ContextId>> owner_;
};

/// Nearest routine ancestor-or-self of every context.
std::vector<ContextId> routine_owners(const ContextTree& tree);

}  // namespace gpuprof::analysis
