#pragma once

// Metric-free trees of calling contexts. The same type holds the unified
// tree of raw call-path frames and the source-level tree after expansion
// through program structure.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpuprof/core/model.hpp"

namespace gpuprof {

using ContextId = std::uint32_t;

enum class ContextKind : std::uint8_t {
  Root = 0,
  Function = 1,
  Loop = 2,
  Inline = 3,
  Line = 4,
  Unknown = 5,      // a module without structure for the address
  Placeholder = 6,
  GpuScc = 7,
  // Unexpanded instruction addresses.
  CpuAddr = 8,
  GpuInstAddr = 9,
  GpuCallAddr = 10,
};

const char* context_kind_name(ContextKind k);
/// Throws ParseError for unknown names.
ContextKind context_kind_from_name(const std::string& name);

/// Identity of a context among its siblings.
///
/// `value` is a structure record id for Function/Loop/Inline/Line, an
/// offset for address kinds, the representative entry for GpuScc, and the
/// target offset for placeholders. `sub` is the placeholder kind.
struct ContextKey {
  ContextKind kind = ContextKind::Root;
  ModuleId module = 0;
  std::uint64_t value = 0;
  std::uint8_t sub = 0;

  static ContextKey from_frame(const Frame& f);
  bool is_address() const {
    return kind == ContextKind::CpuAddr || kind == ContextKind::GpuInstAddr ||
           kind == ContextKind::GpuCallAddr;
  }
  /// Procedure-like frames: the unit of flat and bottom-up views.
  bool is_routine() const { return kind == ContextKind::Function || kind == ContextKind::Unknown; }

  auto operator<=>(const ContextKey&) const = default;
};

/// Display attributes copied from program structure.
struct ContextInfo {
  std::string name;
  std::string file;
  std::uint32_t line = 0;
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  bool operator==(const ContextInfo&) const = default;
};

struct ContextNode {
  ContextKey key;
  ContextId parent = kNoNode;
  std::uint32_t depth = 0;
  ContextInfo info;
  std::map<ContextKey, ContextId> children;
};

class ContextTree {
 public:
  ContextTree();

  ContextId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const ContextNode& node(ContextId id) const { return nodes_.at(id); }

  /// Get-or-create. `info` is only used on creation.
  ContextId child(ContextId parent, const ContextKey& key, const ContextInfo& info = {});
  std::optional<ContextId> find_child(ContextId parent, const ContextKey& key) const;

  /// Adds every path of `other` (set union).
  void merge(const ContextTree& other);

  /// Ids in canonical preorder (children in key order).
  std::vector<ContextId> preorder() const;
  /// Renumbers ids into canonical preorder. Returns old -> new.
  std::vector<ContextId> canonicalize();

  /// Ancestors from the root (exclusive) to `id` (inclusive).
  std::vector<ContextId> path_to(ContextId id) const;

  /// Same shape, keys and info.
  bool operator==(const ContextTree& o) const;

 private:
  std::vector<ContextNode> nodes_;
};

}  // namespace gpuprof
