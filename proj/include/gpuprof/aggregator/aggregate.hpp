#pragma once

// Post-mortem aggregation of a measurement directory into a database:
//
//   acquire -> unify call paths -> expand through structure
//           -> per-profile statistics and PMS planes -> CMS rounds, traces
//
// Worker groups model ranks. Each group owns a contiguous slice of the
// canonically ordered profiles; its workers claim profiles dynamically.
// Partial results are combined by reduction trees whose arity is the
// number of workers per group. Every merge is order-independent, so the
// database bytes do not depend on the plan.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gpuprof/core/context.hpp"
#include "gpuprof/core/model.hpp"
#include "gpuprof/formats/meta.hpp"
#include "gpuprof/formats/structure.hpp"
#include "gpuprof/formats/trace_file.hpp"
#include "gpuprof/gpucct/gpubin.hpp"

namespace gpuprof::aggregator {

struct AggregationPlan {
  std::uint32_t groups = 1;             // G
  std::uint32_t threads = 1;            // t, also the reduction arity
  std::uint64_t memory_budget = 64ull << 20;  // bytes of CMS planes per round

  /// Throws ConfigError unless groups and threads are positive.
  void validate() const;
};

struct InputProfile {
  std::string path;
  std::string file_name;
  ProfileIdTuple id;
};

struct Inputs {
  std::string dir;
  std::vector<InputProfile> profiles;  // ascending by id tuple
  std::vector<LoadModule> modules;     // global ids, ascending by path
  std::vector<std::string> skipped;    // unreadable file names, with reasons
};

/// Scans `<dir>/*.prof`. Throws EmptyInput when no profile is readable.
Inputs acquire_inputs(const std::string& dir);

/// Contiguous slices [begin, end) of `n` items over `groups`; the first
/// n mod groups slices get one extra item.
std::vector<std::pair<std::size_t, std::size_t>> partition(std::size_t n, std::size_t groups);

/// GPU binaries by module path.
using BinaryMap = std::map<std::string, gpucct::GpuBinary>;
/// Loads `<dir>/binaries/*.gpubin`; a missing directory yields none.
BinaryMap load_binaries(const std::string& measurement_dir);

/// Structure files by global module id.
using StructureMap = std::map<ModuleId, const formats::StructureFile*>;

struct NormalizedProfile {
  Profile profile;
  /// Original node id -> normalized node id. Instruction nodes replaced by
  /// GPU context reconstruction map to kNoNode.
  std::vector<NodeId> node_map;
  std::vector<std::string> warnings;
};

/// Renumbers modules to global ids and replaces the instruction samples of
/// every kernel placeholder by its reconstructed GPU calling contexts.
NormalizedProfile normalize_profile(const Profile& p, const std::vector<LoadModule>& global_modules,
                                    const BinaryMap& binaries);

/// The profile's call paths as a tree of raw keys.
ContextTree call_path_tree(const CallingContextTree& cct);

struct Expansion {
  ContextTree tree;
  std::vector<ContextId> raw_to_context;
};

/// Replaces every address by its structure chain (function, inline and
/// loop scopes, line) and leaves other contexts as they are. Addresses
/// without structure go to one unknown-function context per module and
/// parent. Ids of the result are canonical.
Expansion expand_contexts(const ContextTree& raw, const StructureMap& structures,
                          const std::vector<LoadModule>& modules, const BinaryMap& binaries);

/// Puts a flagged trace in timestamp order. Stable; at equal timestamps an
/// idle marker (context 0) sorts first, since it closes the interval before.
void sort_trace(std::vector<TraceRecord>& records);

/// Rewrites node ids through `to_context` and sorts flagged traces.
/// Throws DanglingTraceRef when a record has no mapping.
formats::TraceFile finalize_trace(const ProfileIdTuple& id, const Trace& trace,
                                  const std::vector<ContextId>& to_context);

struct AggregateSummary {
  std::uint32_t profiles = 0;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
  std::uint32_t contexts = 0;
  std::uint32_t metrics = 0;
  std::uint32_t cms_rounds = 0;
  std::uint64_t cms_peak_bytes = 0;   // largest CMS plane volume held at once
  std::uint64_t cms_max_plane = 0;
  std::uint64_t pms_bytes = 0;
  std::uint64_t cms_bytes = 0;
};

/// Writes `<db>/meta`, `<db>/profile.pms`, `<db>/cct.cms` and
/// `<db>/trace/<index>.trace`. An empty `structure_dir` or a missing
/// directory falls back to unknown functions with a warning.
AggregateSummary aggregate(const std::string& measurement_dir, const std::string& structure_dir,
                           const std::string& db_dir, const AggregationPlan& plan);

/// Display name of a context, built from its key and info.
std::string context_label(const ContextNode& node, const std::vector<LoadModule>& modules);

}  // namespace gpuprof::aggregator
