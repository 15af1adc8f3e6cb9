#pragma once

// Trace-level analyses: area statistics at a call depth, server-side line
// sampling for rendering, and GPU idleness blame.
//
// Context 0 in a trace marks idleness. A GPU stream is idle before its
// first record and wherever its current context is 0. A CPU thread is
// active while its current context is neither 0 nor a placeholder (a
// thread waiting on a GPU operation is not working).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "gpuprof/analysis/database.hpp"

namespace gpuprof::analysis {

using Rational = boost::multiprecision::cpp_rational;

/// Frames shown in a trace call stack, outermost first: routines, inlined
/// functions and GPU operation placeholders.
std::vector<ContextId> call_stack(const ContextTree& tree, ContextId c);
/// Stack frame at `depth`, clamped to the deepest; 0 for idle.
ContextId frame_at_depth(const ContextTree& tree, ContextId c, std::size_t depth);

inline constexpr const char* kIdleLabel = "<idle>";

struct AreaShare {
  std::string name;
  std::uint64_t ns = 0;
  double fraction = 0;
};

/// Time covered by each frame name at `depth` over all lines, including the
/// idle entry; descending by time, then by name. Each line spans its first
/// to its last record.
std::vector<AreaShare> trace_area_stats(const ContextTree& tree, const std::vector<LoadModule>& modules,
                                        std::span<const TraceLine> lines, std::size_t depth);
std::vector<AreaShare> trace_area_stats(const Database& db, std::size_t depth);

struct Segment {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  ContextId frame = 0;  // 0 when idle
};

struct SampledLine {
  std::size_t profile = 0;
  ProfileIdTuple id;
  std::vector<Segment> segments;
};

/// Samples every line at `pixels` evenly spaced instants of [t0, t1) and
/// merges equal neighbours, so a line has at most `pixels` segments.
std::vector<SampledLine> sample_trace_lines(const Database& db, std::uint64_t t0, std::uint64_t t1,
                                            std::size_t depth, std::size_t pixels);

struct BlameOptions {
  /// Routine depth from the outermost; the innermost routine when unset.
  std::optional<std::size_t> depth;
  /// Sweep each (node, rank) separately; otherwise all lines together.
  bool per_rank = true;
};

struct BlameEntry {
  std::string routine;
  Rational blamed;  // ns, exact
  double share = 0;
};

struct BlameReport {
  std::vector<BlameEntry> entries;  // descending by share, then by name
  Rational total;
};

/// Splits each interval where every GPU stream of the scope is idle and
/// some CPU thread is active equally among the active threads' routines.
/// Throws NoGpuLines when no line is a GPU stream.
BlameReport blame_idleness(const ContextTree& tree, const std::vector<LoadModule>& modules,
                           std::span<const TraceLine> lines, const BlameOptions& options = {});
BlameReport blame_idleness(const Database& db, const BlameOptions& options = {});

}  // namespace gpuprof::analysis
