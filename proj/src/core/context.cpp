#include "gpuprof/core/context.hpp"

#include <array>

#include "gpuprof/error.hpp"

namespace gpuprof {

namespace {
constexpr std::array<const char*, 11> kKindNames = {
    "root",        "function", "loop",      "inline",   "line",         "unknown",
    "placeholder", "gpu_scc",  "cpu_addr",  "gpu_inst", "gpu_call_site"};
}

const char* context_kind_name(ContextKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

ContextKind context_kind_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (name == kKindNames[i]) return static_cast<ContextKind>(i);
  throw Error(Errc::ParseError, "unknown context kind '" + name + "'");
}

ContextKey ContextKey::from_frame(const Frame& f) {
  switch (f.kind) {
    case FrameKind::Root: return {};
    case FrameKind::Cpu: return {ContextKind::CpuAddr, f.addr.module_id, f.addr.offset, 0};
    case FrameKind::Placeholder:
      return {ContextKind::Placeholder, f.addr.module_id, f.addr.offset,
              static_cast<std::uint8_t>(f.placeholder)};
    case FrameKind::GpuInstruction:
      return {ContextKind::GpuInstAddr, f.addr.module_id, f.addr.offset, 0};
    case FrameKind::GpuCallSite:
      return {ContextKind::GpuCallAddr, f.addr.module_id, f.addr.offset, 0};
    case FrameKind::GpuScc: return {ContextKind::GpuScc, f.addr.module_id, f.addr.offset, 0};
  }
  return {};
}

ContextTree::ContextTree() { nodes_.push_back(ContextNode{}); }

ContextId ContextTree::child(ContextId parent, const ContextKey& key, const ContextInfo& info) {
  auto& kids = nodes_.at(parent).children;
  if (auto it = kids.find(key); it != kids.end()) return it->second;
  const auto id = static_cast<ContextId>(nodes_.size());
  const std::uint32_t depth = nodes_[parent].depth + 1;
  kids.emplace(key, id);
  nodes_.push_back(ContextNode{key, parent, depth, info, {}});
  return id;
}

std::optional<ContextId> ContextTree::find_child(ContextId parent, const ContextKey& key) const {
  const auto& kids = nodes_.at(parent).children;
  if (auto it = kids.find(key); it != kids.end()) return it->second;
  return std::nullopt;
}

void ContextTree::merge(const ContextTree& other) {
  std::vector<std::pair<ContextId, ContextId>> stack{{0, 0}};  // (other, this)
  while (!stack.empty()) {
    auto [o, t] = stack.back();
    stack.pop_back();
    for (const auto& [key, oc] : other.nodes_[o].children)
      stack.emplace_back(oc, child(t, key, other.nodes_[oc].info));
  }
}

std::vector<ContextId> ContextTree::preorder() const {
  std::vector<ContextId> out;
  out.reserve(nodes_.size());
  std::vector<ContextId> stack{0};
  while (!stack.empty()) {
    ContextId n = stack.back();
    stack.pop_back();
    out.push_back(n);
    const auto& kids = nodes_[n].children;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(it->second);
  }
  return out;
}

std::vector<ContextId> ContextTree::canonicalize() {
  const auto order = preorder();
  std::vector<ContextId> remap(nodes_.size());
  for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<ContextId>(i);
  std::vector<ContextNode> next(nodes_.size());
  for (std::size_t old = 0; old < nodes_.size(); ++old) {
    ContextNode n = std::move(nodes_[old]);
    if (n.parent != kNoNode) n.parent = remap[n.parent];
    for (auto& [k, c] : n.children) c = remap[c];
    next[remap[old]] = std::move(n);
  }
  nodes_ = std::move(next);
  return remap;
}

std::vector<ContextId> ContextTree::path_to(ContextId id) const {
  std::vector<ContextId> out;
  for (ContextId n = id; n != 0; n = nodes_.at(n).parent) out.push_back(n);
  return {out.rbegin(), out.rend()};
}

bool ContextTree::operator==(const ContextTree& o) const {
  if (nodes_.size() != o.nodes_.size()) return false;
  std::vector<std::pair<ContextId, ContextId>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [a, b] = stack.back();
    stack.pop_back();
    const auto& na = nodes_[a];
    const auto& nb = o.nodes_[b];
    if (na.key != nb.key || na.info != nb.info || na.children.size() != nb.children.size())
      return false;
    auto ib = nb.children.begin();
    for (const auto& [k, ca] : na.children) {
      if (k != ib->first) return false;
      stack.emplace_back(ca, ib->second);
      ++ib;
    }
  }
  return true;
}

}  // namespace gpuprof
