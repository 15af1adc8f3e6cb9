#pragma once

// Top-down, bottom-up and flat views over a database, plus per-profile
// plots of one context.

#include <cstdint>
#include <string>
#include <vector>

#include "gpuprof/analysis/database.hpp"

namespace gpuprof::analysis {

struct TopDownRow {
  ContextId context = 0;
  std::string label;
  ContextKind kind = ContextKind::Root;
  std::vector<std::uint64_t> inclusive;  // one per requested metric
  std::vector<std::uint64_t> exclusive;
  bool has_children = false;
};

/// Children of `parent` in canonical order. Throws UnknownContext or
/// UnknownMetric.
std::vector<TopDownRow> view_topdown(const Database& db, ContextId parent,
                                     const std::vector<std::string>& metrics);

/// A routine: one function (or unknown-function bucket) of a module.
struct RoutineKey {
  ContextKind kind = ContextKind::Function;
  ModuleId module = 0;
  std::uint64_t record = 0;
  auto operator<=>(const RoutineKey&) const = default;
};

/// Exclusive cost of every routine instance: the exclusive values of all
/// contexts it owns. Indexed by context id; 0 for non-routines.
std::vector<std::uint64_t> routine_costs(const Database& db, DbMetricId exclusive_metric);

struct FlatRow {
  RoutineKey routine;
  std::string label;
  std::string module;
  std::uint64_t exclusive = 0;  // summed over every context of the routine
  std::uint64_t inclusive = 0;  // summed over outermost instances only
  std::uint32_t instances = 0;
};

/// One row per routine, descending by exclusive cost, then by label.
std::vector<FlatRow> view_flat(const Database& db, const std::string& metric);

struct BottomUpRow {
  std::string label;             // the caller routine
  std::uint64_t cost = 0;        // the callee's cost incurred under it
  std::vector<BottomUpRow> callers;
};

/// Callers of every routine labelled `function`, each with the portion of
/// its cost incurred under that caller, expanded transitively. Rows sum to
/// the flat cost. Throws UnknownFunction.
std::vector<BottomUpRow> view_bottomup(const Database& db, const std::string& function,
                                       const std::string& metric);

struct PlotPoint {
  std::size_t profile = 0;
  ProfileIdTuple id;
  std::uint64_t value = 0;
};

/// Non-zero values of one context and metric across profiles, read with a
/// single CMS scan. Throws UnknownContext or UnknownMetric.
std::vector<PlotPoint> plot_thread_metric(const Database& db, ContextId c, DbMetricId m);

}  // namespace gpuprof::analysis
