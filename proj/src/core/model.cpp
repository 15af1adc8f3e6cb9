#include "gpuprof/core/model.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

#include "gpuprof/error.hpp"

namespace gpuprof {

const char* placeholder_name(PlaceholderKind kind) {
  switch (kind) {
    case PlaceholderKind::KernelLaunch: return "kernel";
    case PlaceholderKind::CopyHostToDevice: return "copy_h2d";
    case PlaceholderKind::CopyDeviceToHost: return "copy_d2h";
    case PlaceholderKind::Sync: return "sync";
    case PlaceholderKind::MemAlloc: return "alloc";
    case PlaceholderKind::MemSet: return "memset";
  }
  return "?";
}

// ---- MetricTable ----------------------------------------------------------

void MetricTable::add_kind(KindId id, std::string name) {
  if (kind_by_id_.count(id))
    throw Error(Errc::ConfigError, "duplicate metric kind id " + std::to_string(id));
  for (const auto& k : kinds_)
    if (k.name == name)
      throw Error(Errc::ConfigError, "duplicate metric kind name " + name);
  auto pos = std::lower_bound(kinds_.begin(), kinds_.end(), id,
                              [](const MetricKind& k, KindId v) { return k.id < v; });
  kinds_.insert(pos, MetricKind{id, std::move(name), {}});
  kind_by_id_.clear();
  for (std::size_t i = 0; i < kinds_.size(); ++i) kind_by_id_[kinds_[i].id] = i;
}

void MetricTable::add_metric(MetricDescriptor desc) {
  if (by_id_.count(desc.id))
    throw Error(Errc::ConfigError, "duplicate metric id " + std::to_string(desc.id));
  if (by_name_.count(desc.name))
    throw Error(Errc::ConfigError, "duplicate metric name " + desc.name);
  auto kit = kind_by_id_.find(desc.kind_id);
  if (kit == kind_by_id_.end())
    throw Error(Errc::ConfigError, "metric " + desc.name + " names unknown kind");
  kinds_[kit->second].members.push_back(desc.id);
  auto pos = std::lower_bound(
      metrics_.begin(), metrics_.end(), desc.id,
      [](const MetricDescriptor& d, MetricId v) { return d.id < v; });
  metrics_.insert(pos, std::move(desc));
  by_id_.clear();
  by_name_.clear();
  for (std::size_t i = 0; i < metrics_.size(); ++i) {
    by_id_[metrics_[i].id] = i;
    by_name_[metrics_[i].name] = i;
  }
}

const MetricDescriptor* MetricTable::find(MetricId id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &metrics_[it->second];
}

const MetricDescriptor* MetricTable::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &metrics_[it->second];
}

const MetricKind* MetricTable::find_kind(KindId id) const {
  auto it = kind_by_id_.find(id);
  return it == kind_by_id_.end() ? nullptr : &kinds_[it->second];
}

// ---- CctNode --------------------------------------------------------------

std::uint64_t CctNode::metric(MetricId m) const {
  for (const auto& b : metrics)
    for (const auto& [id, v] : b.values)
      if (id == m) return v;
  return 0;
}

std::size_t CctNode::metric_count() const {
  std::size_t n = 0;
  for (const auto& b : metrics) n += b.values.size();
  return n;
}

std::vector<std::pair<MetricId, std::uint64_t>> CctNode::metric_values() const {
  std::vector<std::pair<MetricId, std::uint64_t>> out;
  for (const auto& b : metrics) out.insert(out.end(), b.values.begin(), b.values.end());
  std::sort(out.begin(), out.end());
  return out;
}

void add_metric(CctNode& node, const MetricTable& table, MetricId m,
                std::uint64_t delta) {
  const MetricDescriptor* desc = table.find(m);
  if (!desc) throw Error(Errc::UnknownMetric, "metric id " + std::to_string(m));
  if (delta == 0) return;
  auto bit = std::lower_bound(
      node.metrics.begin(), node.metrics.end(), desc->kind_id,
      [](const MetricBlock& b, KindId k) { return b.kind_id < k; });
  if (bit == node.metrics.end() || bit->kind_id != desc->kind_id)
    bit = node.metrics.insert(bit, MetricBlock{desc->kind_id, {}});
  auto& vals = bit->values;
  auto vit = std::lower_bound(
      vals.begin(), vals.end(), m,
      [](const std::pair<MetricId, std::uint64_t>& p, MetricId k) { return p.first < k; });
  if (vit == vals.end() || vit->first != m)
    vals.insert(vit, {m, delta});
  else
    vit->second += delta;
}

// ---- CallingContextTree ---------------------------------------------------

CallingContextTree::CallingContextTree(std::shared_ptr<const MetricTable> table)
    : table_(std::move(table)) {
  nodes_.push_back(CctNode{0, kNoNode, Frame::root(), {}, {}});
}

NodeId CallingContextTree::child(NodeId parent, const Frame& frame) {
  auto& kids = nodes_.at(parent).children;
  auto it = kids.find(frame);
  if (it != kids.end()) return it->second;
  auto id = static_cast<NodeId>(nodes_.size());
  kids.emplace(frame, id);
  nodes_.push_back(CctNode{id, parent, frame, {}, {}});
  return id;
}

std::optional<NodeId> CallingContextTree::find_child(NodeId parent,
                                                     const Frame& frame) const {
  const auto& kids = nodes_.at(parent).children;
  auto it = kids.find(frame);
  if (it == kids.end()) return std::nullopt;
  return it->second;
}

NodeId CallingContextTree::insert_call_path(std::span<const Frame> path) {
  NodeId cur = root();
  for (const auto& f : path) cur = child(cur, f);
  return cur;
}

void CallingContextTree::add_metric(NodeId id, MetricId m, std::uint64_t delta) {
  gpuprof::add_metric(nodes_.at(id), *table_, m, delta);
}

void CallingContextTree::set_metrics(NodeId id, std::vector<MetricBlock> blocks) {
  nodes_.at(id).metrics = std::move(blocks);
}

std::vector<NodeId> CallingContextTree::preorder() const {
  std::vector<NodeId> order;
  order.reserve(nodes_.size());
  std::vector<NodeId> stack{root()};
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    order.push_back(n);
    const auto& kids = nodes_[n].children;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(it->second);
  }
  return order;
}

std::vector<Frame> CallingContextTree::path_to(NodeId id) const {
  std::vector<Frame> path;
  for (NodeId n = id; n != root(); n = nodes_.at(n).parent) path.push_back(nodes_[n].frame);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<NodeId> CallingContextTree::compact(const std::vector<bool>& keep) {
  std::vector<NodeId> remap(nodes_.size(), kNoNode);
  NodeId next = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (keep[i]) remap[i] = next++;
  std::vector<CctNode> out;
  out.reserve(next);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!keep[i]) continue;
    CctNode n = std::move(nodes_[i]);
    n.id = remap[i];
    if (n.parent != kNoNode) n.parent = remap[n.parent];
    std::map<Frame, NodeId> kids;
    for (const auto& [f, c] : n.children)
      if (remap[c] != kNoNode) kids.emplace(f, remap[c]);
    n.children = std::move(kids);
    out.push_back(std::move(n));
  }
  nodes_ = std::move(out);
  return remap;
}

void CallingContextTree::check_invariants() const {
  if (nodes_.empty() || nodes_[0].frame.kind != FrameKind::Root ||
      nodes_[0].parent != kNoNode)
    throw std::logic_error("tree has no root");
  std::vector<int> seen(nodes_.size(), 0);
  std::vector<NodeId> stack{0};
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    if (seen[n]++) throw std::logic_error("node reached twice");
    const auto& node = nodes_[n];
    if (node.id != n) throw std::logic_error("node id mismatch");
    for (const auto& [f, c] : node.children) {
      if (c >= nodes_.size()) throw std::logic_error("dangling child");
      if (nodes_[c].parent != n || !(nodes_[c].frame == f))
        throw std::logic_error("child/parent link mismatch");
      stack.push_back(c);
    }
    KindId last_kind = 0;
    bool first = true;
    for (const auto& b : node.metrics) {
      if (!first && b.kind_id <= last_kind) throw std::logic_error("duplicate metric block");
      first = false;
      last_kind = b.kind_id;
      const MetricKind* kind = table_->find_kind(b.kind_id);
      if (!kind) throw std::logic_error("unknown metric kind");
      for (const auto& [m, v] : b.values) {
        if (v == 0) throw std::logic_error("stored zero metric");
        const MetricDescriptor* d = table_->find(m);
        if (!d || d->kind_id != b.kind_id) throw std::logic_error("metric outside its kind");
      }
    }
    if (node.frame.kind == FrameKind::GpuInstruction) {
      bool under_kernel = false;
      for (NodeId p = node.parent; p != kNoNode; p = nodes_[p].parent) {
        const Frame& pf = nodes_[p].frame;
        if (pf.is_placeholder() && pf.placeholder == PlaceholderKind::KernelLaunch) {
          under_kernel = true;
          break;
        }
      }
      if (!under_kernel) throw std::logic_error("GPU instruction outside a kernel launch");
    }
  }
  for (int s : seen)
    if (s != 1) throw std::logic_error("unreachable node");
}

// ---- ProfileIdTuple / Profile --------------------------------------------

std::string ProfileIdTuple::to_string() const {
  std::string s = "node " + std::to_string(node) + " rank " + std::to_string(rank);
  if (kind == Kind::CpuThread)
    s += " thread " + std::to_string(thread_id);
  else
    s += " gpu " + std::to_string(device_id) + " stream " + std::to_string(stream_id);
  return s;
}

std::string ProfileIdTuple::file_name() const {
  if (kind == Kind::CpuThread)
    return "cpu-" + std::to_string(rank) + "-" + std::to_string(thread_id) + ".prof";
  return "stream-" + std::to_string(rank) + "-" + std::to_string(device_id) + "-" +
         std::to_string(stream_id) + ".prof";
}

const LoadModule* Profile::find_module(ModuleId id) const {
  for (const auto& m : load_modules)
    if (m.id == id) return &m;
  return nullptr;
}

void Profile::check_invariants() const {
  cct.check_invariants();
  for (std::size_t i = 0; i < load_modules.size(); ++i) {
    if (load_modules[i].path.empty()) throw std::logic_error("empty module path");
    for (std::size_t j = i + 1; j < load_modules.size(); ++j)
      if (load_modules[i].id == load_modules[j].id)
        throw std::logic_error("duplicate module id");
  }
  for (std::size_t n = 1; n < cct.size(); ++n) {
    const Frame& f = cct.node(static_cast<NodeId>(n)).frame;
    if (f.addr.module_id != kRootModule && !find_module(f.addr.module_id))
      throw std::logic_error("frame references unknown module");
  }
  if (trace)
    for (const auto& r : trace->records)
      if (r.cct_node_id >= cct.size()) throw std::logic_error("trace references unknown node");
}

namespace {

bool subtree_equal(const CallingContextTree& a, NodeId na, const CallingContextTree& b,
                   NodeId nb) {
  const auto& x = a.node(na);
  const auto& y = b.node(nb);
  if (!(x.frame == y.frame) || !(x.metrics == y.metrics) ||
      x.children.size() != y.children.size())
    return false;
  auto it = y.children.begin();
  for (const auto& [f, c] : x.children) {
    if (!(f == it->first) || !subtree_equal(a, c, b, it->second)) return false;
    ++it;
  }
  return true;
}

}  // namespace

bool structurally_equal(const Profile& a, const Profile& b) {
  if (!(a.id_tuple == b.id_tuple) || !(a.load_modules == b.load_modules)) return false;
  if (!(a.cct.table() == b.cct.table())) return false;
  if (!subtree_equal(a.cct, a.cct.root(), b.cct, b.cct.root())) return false;
  if (a.trace.has_value() != b.trace.has_value()) return false;
  if (a.trace) {
    if (a.trace->out_of_order != b.trace->out_of_order ||
        a.trace->records.size() != b.trace->records.size())
      return false;
    for (std::size_t i = 0; i < a.trace->records.size(); ++i) {
      const auto& ra = a.trace->records[i];
      const auto& rb = b.trace->records[i];
      if (ra.timestamp != rb.timestamp ||
          a.cct.path_to(ra.cct_node_id) != b.cct.path_to(rb.cct_node_id))
        return false;
    }
  }
  return true;
}

}  // namespace gpuprof
