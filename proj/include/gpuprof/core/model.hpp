#pragma once

// Calling context trees with kind-partitioned sparse metrics.

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gpuprof {

using ModuleId = std::uint32_t;
using NodeId = std::uint32_t;
using MetricId = std::uint16_t;
using KindId = std::uint16_t;

inline constexpr NodeId kNoNode = 0xFFFFFFFFu;
/// Module id 0 is reserved for the synthetic program root.
inline constexpr ModuleId kRootModule = 0;

struct LoadModule {
  ModuleId id = 0;
  std::string path;

  bool operator==(const LoadModule&) const = default;
};

struct FrameAddr {
  ModuleId module_id = 0;
  std::uint64_t offset = 0;

  auto operator<=>(const FrameAddr&) const = default;
};

enum class PlaceholderKind : std::uint8_t {
  KernelLaunch = 0,
  CopyHostToDevice = 1,
  CopyDeviceToHost = 2,
  Sync = 3,
  MemAlloc = 4,
  MemSet = 5,
};
inline constexpr int kPlaceholderKindCount = 6;

const char* placeholder_name(PlaceholderKind kind);

enum class FrameKind : std::uint8_t {
  Root = 0,
  Cpu = 1,
  Placeholder = 2,
  GpuInstruction = 3,
  GpuCallSite = 4,
  GpuScc = 5,
};

/// One element of a call path.
///
/// Placeholders carry a target address: for kernel launches it is the kernel
/// entry, so that distinct kernels launched from one CPU context stay
/// distinct. For every other frame kind `placeholder` is normalized to 0.
struct Frame {
  FrameKind kind = FrameKind::Root;
  FrameAddr addr{};
  PlaceholderKind placeholder = PlaceholderKind::KernelLaunch;

  static Frame root() { return {}; }
  static Frame cpu(FrameAddr a) { return {FrameKind::Cpu, a, {}}; }
  static Frame make_placeholder(PlaceholderKind k, FrameAddr target = {}) {
    return {FrameKind::Placeholder, target, k};
  }
  static Frame gpu_instruction(FrameAddr a) {
    return {FrameKind::GpuInstruction, a, {}};
  }
  static Frame gpu_call_site(FrameAddr a) {
    return {FrameKind::GpuCallSite, a, {}};
  }
  static Frame gpu_scc(FrameAddr a) { return {FrameKind::GpuScc, a, {}}; }

  bool is_placeholder() const { return kind == FrameKind::Placeholder; }

  bool operator==(const Frame&) const = default;
  // Canonical sibling order: (module, offset, kind, placeholder kind).
  std::strong_ordering operator<=>(const Frame& o) const {
    if (auto c = addr <=> o.addr; c != 0) return c;
    if (auto c = kind <=> o.kind; c != 0) return c;
    return placeholder <=> o.placeholder;
  }
};

enum class StallReason : std::uint8_t {
  None = 0,  // the warp issued
  MemoryDependency = 1,
  ExecutionDependency = 2,
  NotSelected = 3,
  InstructionFetch = 4,
  Synchronization = 5,
  Other = 6,
};
inline constexpr int kStallReasonCount = 7;

enum class Combine : std::uint8_t { Sum = 0, Min = 1, Max = 2 };

struct MetricDescriptor {
  MetricId id = 0;
  std::string name;
  KindId kind_id = 0;
  Combine combine = Combine::Sum;

  bool operator==(const MetricDescriptor&) const = default;
};

struct MetricKind {
  KindId id = 0;
  std::string name;
  std::vector<MetricId> members;

  bool operator==(const MetricKind&) const = default;
};

/// Registry of metric kinds and descriptors for one profile.
class MetricTable {
 public:
  /// Throws ConfigError on duplicate ids or names.
  void add_kind(KindId id, std::string name);
  /// Appends the metric to its kind's member list. Throws ConfigError on
  /// duplicates or an unknown kind.
  void add_metric(MetricDescriptor desc);

  const MetricDescriptor* find(MetricId id) const;
  const MetricDescriptor* find(const std::string& name) const;
  const MetricKind* find_kind(KindId id) const;

  /// Descriptors in ascending id order.
  const std::vector<MetricDescriptor>& metrics() const { return metrics_; }
  /// Kinds in ascending id order.
  const std::vector<MetricKind>& kinds() const { return kinds_; }

  bool operator==(const MetricTable& o) const {
    return metrics_ == o.metrics_ && kinds_ == o.kinds_;
  }

 private:
  std::vector<MetricDescriptor> metrics_;
  std::vector<MetricKind> kinds_;
  std::unordered_map<MetricId, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::unordered_map<KindId, std::size_t> kind_by_id_;
};

/// Values of one metric kind at one node. Zero is represented by absence.
struct MetricBlock {
  KindId kind_id = 0;
  std::vector<std::pair<MetricId, std::uint64_t>> values;  // ascending ids

  bool operator==(const MetricBlock&) const = default;
};

struct CctNode {
  NodeId id = 0;
  NodeId parent = kNoNode;
  Frame frame;
  std::map<Frame, NodeId> children;
  std::vector<MetricBlock> metrics;  // ascending kind ids

  std::uint64_t metric(MetricId m) const;
  /// Number of stored (non-zero) values across all blocks.
  std::size_t metric_count() const;
  /// All stored values, ascending by metric id.
  std::vector<std::pair<MetricId, std::uint64_t>> metric_values() const;
};

/// Adds `delta` to the node's value for metric `m`, creating the kind's
/// block on first touch. A resulting zero is stored as absence.
/// Throws UnknownMetric if `m` has no descriptor.
void add_metric(CctNode& node, const MetricTable& table, MetricId m,
                std::uint64_t delta);

/// A single-rooted tree of call paths. Node ids are dense indices; the root
/// is always node 0 with a Root frame.
class CallingContextTree {
 public:
  explicit CallingContextTree(std::shared_ptr<const MetricTable> table);

  NodeId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const CctNode& node(NodeId id) const { return nodes_.at(id); }
  const MetricTable& table() const { return *table_; }
  const std::shared_ptr<const MetricTable>& table_ptr() const {
    return table_;
  }

  /// Walks `path` from the root, creating missing nodes, and returns the id
  /// of the last node. Identical prefixes share nodes.
  NodeId insert_call_path(std::span<const Frame> path);
  NodeId insert_call_path(std::initializer_list<Frame> path) {
    return insert_call_path(std::span<const Frame>(path.begin(), path.size()));
  }
  /// Get-or-create the child of `parent` with `frame`.
  NodeId child(NodeId parent, const Frame& frame);
  std::optional<NodeId> find_child(NodeId parent, const Frame& frame) const;

  void add_metric(NodeId id, MetricId m, std::uint64_t delta);
  std::uint64_t metric(NodeId id, MetricId m) const {
    return nodes_.at(id).metric(m);
  }
  /// Replaces the node's metrics wholesale (used by readers).
  void set_metrics(NodeId id, std::vector<MetricBlock> blocks);

  /// Removes all descendants of `id` whose frame satisfies `pred`, together
  /// with their subtrees, and compacts ids. Returns old-id -> new-id (kNoNode
  /// for removed nodes).
  template <typename Pred>
  std::vector<NodeId> prune_children(NodeId id, Pred pred);

  /// Node ids in canonical preorder (children visited in frame order).
  std::vector<NodeId> preorder() const;
  /// Frames from the root (exclusive) down to `id` (inclusive).
  std::vector<Frame> path_to(NodeId id) const;

  /// Throws std::logic_error if tree or sparsity invariants fail.
  void check_invariants() const;

 private:
  std::shared_ptr<const MetricTable> table_;
  std::vector<CctNode> nodes_;

  std::vector<NodeId> compact(const std::vector<bool>& keep);
};

template <typename Pred>
std::vector<NodeId> CallingContextTree::prune_children(NodeId id, Pred pred) {
  std::vector<bool> keep(nodes_.size(), true);
  std::vector<NodeId> stack;
  for (const auto& [frame, child] : nodes_.at(id).children)
    if (pred(frame)) stack.push_back(child);
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    keep[n] = false;
    for (const auto& [f, c] : nodes_[n].children) stack.push_back(c);
  }
  return compact(keep);
}

struct ProfileIdTuple {
  enum class Kind : std::uint8_t { CpuThread = 0, GpuStream = 1 };

  std::uint32_t node = 0;
  std::uint32_t rank = 0;
  Kind kind = Kind::CpuThread;
  std::uint32_t thread_id = 0;  // CpuThread
  std::uint32_t device_id = 0;  // GpuStream
  std::uint32_t stream_id = 0;  // GpuStream

  static ProfileIdTuple cpu(std::uint32_t node, std::uint32_t rank,
                            std::uint32_t tid) {
    return {node, rank, Kind::CpuThread, tid, 0, 0};
  }
  static ProfileIdTuple gpu(std::uint32_t node, std::uint32_t rank,
                            std::uint32_t dev, std::uint32_t sid) {
    return {node, rank, Kind::GpuStream, 0, dev, sid};
  }

  bool is_gpu() const { return kind == Kind::GpuStream; }
  std::string to_string() const;
  /// Measurement-directory file name: cpu-<rank>-<tid>.prof or
  /// stream-<rank>-<dev>-<sid>.prof.
  std::string file_name() const;

  auto operator<=>(const ProfileIdTuple&) const = default;
};

struct TraceRecord {
  std::uint64_t timestamp = 0;  // ns
  NodeId cct_node_id = 0;

  bool operator==(const TraceRecord&) const = default;
};

struct Trace {
  bool out_of_order = false;
  std::vector<TraceRecord> records;

  bool operator==(const Trace&) const = default;
};

struct Profile {
  ProfileIdTuple id_tuple;
  std::vector<LoadModule> load_modules;
  CallingContextTree cct;
  std::optional<Trace> trace;

  explicit Profile(std::shared_ptr<const MetricTable> table)
      : cct(std::move(table)) {}

  const LoadModule* find_module(ModuleId id) const;
  /// Throws logic_error when module references or trace references dangle.
  void check_invariants() const;
};

/// Isomorphism check: same id tuple, modules, metric table, tree shape,
/// frames, metrics, and trace (trace records compared through node paths).
bool structurally_equal(const Profile& a, const Profile& b);

}  // namespace gpuprof
