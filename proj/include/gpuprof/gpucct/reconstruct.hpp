#pragma once

// Approximate GPU calling context reconstruction for one kernel launch:
// build the static call graph weighted by call-instruction counts, give
// sampled-but-uncalled functions unit edges, contract SCCs, and apportion
// each function's instruction-level counts among its calling contexts.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "gpuprof/core/model.hpp"
#include "gpuprof/gpucct/gpubin.hpp"

namespace gpuprof::gpucct {

using Rational = boost::multiprecision::cpp_rational;

/// Count per instruction address.
using AddressCounts = std::map<std::uint64_t, std::uint64_t>;

struct CallEdge {
  std::uint64_t site = 0;
  std::uint32_t caller = 0;
  std::uint32_t callee = 0;
  std::uint64_t weight = 0;
  bool operator==(const CallEdge&) const = default;
};

struct CallGraph {
  const GpuBinary* binary = nullptr;
  /// Sum of instruction counts per function.
  std::vector<std::uint64_t> interior;
  /// One edge per call site, ascending by site.
  std::vector<CallEdge> edges;
};

/// Throws UnknownAddress when a counted address is not an instruction.
CallGraph build_call_graph(const GpuBinary& binary, const AddressCounts& counts);

/// Sample-mode repair: a function that is active (has interior samples or a
/// weighted outgoing edge) but whose incoming edges all weigh zero gets unit
/// weights on every incoming edge; repeated to a fixpoint.
CallGraph propagate_weights(CallGraph graph);

struct DagNode {
  std::vector<std::uint32_t> members;  // function indices, ascending
  bool scc = false;                    // size >= 2, or a self-loop
};

struct DagEdge {
  std::uint64_t site = 0;
  std::uint32_t from = 0;  // dag node
  std::uint32_t to = 0;    // dag node
  std::uint64_t weight = 0;
};

struct CallDag {
  const GpuBinary* binary = nullptr;
  std::vector<DagNode> nodes;
  std::vector<std::uint32_t> node_of;  // function -> dag node
  std::vector<DagEdge> edges;          // ascending by site; intra-SCC edges dropped
  std::vector<std::uint64_t> interior; // per dag node

  /// Throws std::logic_error if the graph still has a cycle.
  std::vector<std::uint32_t> topological_order() const;
};

/// Tarjan contraction; members of each SCC become one node.
CallDag contract_sccs(const CallGraph& graph);

/// One calling context of a dag node: the edges taken from the entry.
struct GpuContext {
  std::uint32_t node = 0;
  std::vector<std::uint32_t> edges;  // indices into CallDag::edges
  Rational fraction;
};

/// Every context reachable from `entry`, in depth-first order with edges
/// taken by ascending site. A context's fraction is the product over its
/// edges of weight / (total weight into the callee from reachable callers).
/// When a callee's reachable incoming weight is zero its incoming edges
/// count as equal.
std::vector<GpuContext> enumerate_contexts(const CallDag& dag, std::uint32_t entry);

/// Splits `total` by `fractions` (summing to 1): floors, then the whole
/// residue to the largest fractional part, earliest index on ties.
std::vector<std::uint64_t> split_counts(std::uint64_t total, const std::vector<Rational>& fractions);

/// Metric values per instruction address.
using InstructionMetrics = std::map<std::uint64_t, std::vector<std::pair<MetricId, std::uint64_t>>>;

struct Reconstruction {
  /// Root stands for the kernel placeholder. Children are GpuInstruction,
  /// GpuCallSite and GpuScc frames in `module`.
  CallingContextTree subtree;
  /// Sampled functions unreachable from the kernel entry; their counts sit
  /// directly under the root.
  std::vector<std::string> disconnected;
  /// True when exact instruction counts drove the edge weights.
  bool exact = false;
};

/// Throws UnknownAddress or UnknownFunction (no function at `kernel_entry`).
Reconstruction reconstruct(const GpuBinary& binary, ModuleId module, std::uint64_t kernel_entry,
                           const InstructionMetrics& metrics,
                           std::shared_ptr<const MetricTable> table);

}  // namespace gpuprof::gpucct
