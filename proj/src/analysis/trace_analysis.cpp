#include "gpuprof/analysis/trace_analysis.hpp"

#include <algorithm>
#include <map>

#include "gpuprof/aggregator/aggregate.hpp"
#include "gpuprof/error.hpp"

namespace gpuprof::analysis {

namespace {

bool stack_frame(const ContextKey& k) {
  return k.is_routine() || k.kind == ContextKind::Inline || k.kind == ContextKind::Placeholder;
}

std::string frame_label(const ContextTree& tree, const std::vector<LoadModule>& modules, ContextId f) {
  return f == 0 ? kIdleLabel : aggregator::context_label(tree.node(f), modules);
}

/// Index of the record current at `t`, or npos before the first record.
std::size_t current(const std::vector<TraceRecord>& recs, std::uint64_t t) {
  auto it = std::upper_bound(recs.begin(), recs.end(), t,
                             [](std::uint64_t v, const TraceRecord& r) { return v < r.timestamp; });
  return it == recs.begin() ? std::string::npos : static_cast<std::size_t>(it - recs.begin() - 1);
}

}  // namespace

std::vector<ContextId> call_stack(const ContextTree& tree, ContextId c) {
  std::vector<ContextId> out;
  for (ContextId a : tree.path_to(c))
    if (stack_frame(tree.node(a).key)) out.push_back(a);
  if (out.empty() && c != 0) out.push_back(c);
  return out;
}

ContextId frame_at_depth(const ContextTree& tree, ContextId c, std::size_t depth) {
  if (c == 0) return 0;
  const auto stack = call_stack(tree, c);
  return stack[std::min(depth, stack.size() - 1)];
}

std::vector<AreaShare> trace_area_stats(const ContextTree& tree, const std::vector<LoadModule>& modules,
                                        std::span<const TraceLine> lines, std::size_t depth) {
  std::map<std::string, std::uint64_t> by_name;
  std::map<ContextId, ContextId> frame_cache;
  std::uint64_t total = 0;
  for (const auto& line : lines)
    for (std::size_t i = 0; i + 1 < line.records.size(); ++i) {
      const std::uint64_t dur = line.records[i + 1].timestamp - line.records[i].timestamp;
      if (dur == 0) continue;
      const ContextId c = line.records[i].cct_node_id;
      auto it = frame_cache.find(c);
      if (it == frame_cache.end()) it = frame_cache.emplace(c, frame_at_depth(tree, c, depth)).first;
      by_name[frame_label(tree, modules, it->second)] += dur;
      total += dur;
    }
  std::vector<AreaShare> out;
  for (const auto& [name, ns] : by_name)
    out.push_back({name, ns, static_cast<double>(ns) / static_cast<double>(total)});
  std::stable_sort(out.begin(), out.end(), [](const AreaShare& a, const AreaShare& b) { return a.ns > b.ns; });
  return out;
}

std::vector<AreaShare> trace_area_stats(const Database& db, std::size_t depth) {
  return trace_area_stats(db.tree(), db.meta().modules, db.traces(), depth);
}

std::vector<SampledLine> sample_trace_lines(const Database& db, std::uint64_t t0, std::uint64_t t1,
                                            std::size_t depth, std::size_t pixels) {
  if (t1 <= t0 || pixels == 0) throw Error(Errc::ConfigError, "need t0 < t1 and at least one pixel");
  std::vector<SampledLine> out;
  const unsigned __int128 span = t1 - t0;
  for (const auto& line : db.traces()) {
    SampledLine s{line.profile, line.id, {}};
    for (std::size_t px = 0; px < pixels; ++px) {
      const auto begin = static_cast<std::uint64_t>(t0 + span * px / pixels);
      const auto end = static_cast<std::uint64_t>(t0 + span * (px + 1) / pixels);
      if (begin == end) continue;
      const std::size_t i = current(line.records, begin);
      const ContextId f =
          i == std::string::npos ? 0 : frame_at_depth(db.tree(), line.records[i].cct_node_id, depth);
      if (!s.segments.empty() && s.segments.back().frame == f)
        s.segments.back().end = end;
      else
        s.segments.push_back({begin, end, f});
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct BlameKey {
  ContextKey key;
  std::string label;
  auto operator<=>(const BlameKey&) const = default;
};

// Per routine: blamed duration summed per number of sharing threads.
using Partial = std::map<BlameKey, std::map<std::uint32_t, unsigned __int128>>;

void sweep(const ContextTree& tree, const std::vector<LoadModule>& modules,
           const std::vector<const TraceLine*>& lines, const BlameOptions& opt, Partial& out) {
  std::vector<std::uint64_t> points;
  for (const auto* l : lines)
    for (const auto& r : l->records) points.push_back(r.timestamp);
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  auto routine = [&](ContextId c) {
    std::vector<ContextId> chain;
    for (ContextId a : tree.path_to(c))
      if (tree.node(a).key.is_routine()) chain.push_back(a);
    const ContextId r = chain.empty() ? c : chain[std::min(opt.depth.value_or(chain.size() - 1), chain.size() - 1)];
    return BlameKey{tree.node(r).key, aggregator::context_label(tree.node(r), modules)};
  };
  std::map<ContextId, BlameKey> cache;

  std::vector<std::size_t> cursor(lines.size(), 0);  // records consumed so far
  std::vector<BlameKey> active;
  for (std::size_t j = 0; j + 1 < points.size(); ++j) {
    const std::uint64_t t = points[j];
    bool gpu_busy = false;
    active.clear();
    for (std::size_t l = 0; l < lines.size(); ++l) {
      const auto& recs = lines[l]->records;
      while (cursor[l] < recs.size() && recs[cursor[l]].timestamp <= t) ++cursor[l];
      const ContextId c = cursor[l] == 0 ? 0 : recs[cursor[l] - 1].cct_node_id;
      if (lines[l]->id.is_gpu()) {
        gpu_busy = gpu_busy || c != 0;
      } else if (c != 0 && tree.node(c).key.kind != ContextKind::Placeholder) {
        auto it = cache.find(c);
        if (it == cache.end()) it = cache.emplace(c, routine(c)).first;
        active.push_back(it->second);
      }
    }
    if (gpu_busy || active.empty()) continue;
    const std::uint64_t dur = points[j + 1] - t;
    const auto k = static_cast<std::uint32_t>(active.size());
    for (const auto& a : active) out[a][k] += dur;
  }
}

Rational to_rational(unsigned __int128 v) {
  boost::multiprecision::cpp_int i = static_cast<std::uint64_t>(v >> 64);
  i <<= 64;
  i += static_cast<std::uint64_t>(v);
  return Rational(i);
}

}  // namespace

BlameReport blame_idleness(const ContextTree& tree, const std::vector<LoadModule>& modules,
                           std::span<const TraceLine> lines, const BlameOptions& options) {
  if (std::none_of(lines.begin(), lines.end(), [](const TraceLine& l) { return l.id.is_gpu(); }))
    throw Error(Errc::NoGpuLines, "no GPU stream traces to analyze");
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<const TraceLine*>> scopes;
  for (const auto& l : lines)
    scopes[options.per_rank ? std::make_pair(l.id.node, l.id.rank) : std::make_pair(0u, 0u)].push_back(&l);

  Partial partial;
  for (const auto& [scope, ls] : scopes) {
    if (std::none_of(ls.begin(), ls.end(), [](const TraceLine* l) { return l->id.is_gpu(); })) continue;
    sweep(tree, modules, ls, options, partial);
  }

  BlameReport report;
  for (const auto& [key, per_k] : partial) {
    Rational blamed = 0;
    for (const auto& [k, ns] : per_k) blamed += to_rational(ns) / k;
    report.total += blamed;
    report.entries.push_back({key.label, blamed, 0});
  }
  if (report.total == 0) {
    report.entries.clear();
    return report;
  }
  for (auto& e : report.entries) e.share = static_cast<double>(e.blamed / report.total);
  std::stable_sort(report.entries.begin(), report.entries.end(), [](const BlameEntry& a, const BlameEntry& b) {
    if (a.blamed != b.blamed) return a.blamed > b.blamed;
    return a.routine < b.routine;
  });
  return report;
}

BlameReport blame_idleness(const Database& db, const BlameOptions& options) {
  return blame_idleness(db.tree(), db.meta().modules, db.traces(), options);
}

}  // namespace gpuprof::analysis
