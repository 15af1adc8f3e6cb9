#include "gpuprof/analysis/views.hpp"

#include <algorithm>
#include <map>

#include "gpuprof/error.hpp"

namespace gpuprof::analysis {

namespace {

RoutineKey routine_key(const ContextNode& n) { return {n.key.kind, n.key.module, n.key.value}; }

std::string module_name(const Database& db, ModuleId id) {
  const auto* m = db.meta().find_module(id);
  return m ? m->path : std::to_string(id);
}

}  // namespace

std::vector<TopDownRow> view_topdown(const Database& db, ContextId parent,
                                     const std::vector<std::string>& metrics) {
  std::vector<std::pair<DbMetricId, DbMetricId>> ids;
  for (const auto& name : metrics) ids.emplace_back(db.metric(name, true).id, db.metric(name, false).id);
  std::vector<TopDownRow> rows;
  for (const auto& [key, c] : db.context(parent).children) {
    TopDownRow r;
    r.context = c;
    r.label = db.label(c);
    r.kind = key.kind;
    r.has_children = !db.tree().node(c).children.empty();
    for (const auto& [inc, exc] : ids) {
      r.inclusive.push_back(db.sum(c, inc));
      r.exclusive.push_back(db.sum(c, exc));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::uint64_t> routine_costs(const Database& db, DbMetricId m) {
  std::vector<std::uint64_t> cost(db.tree().size(), 0);
  for (ContextId c = 0; c < db.tree().size(); ++c)
    if (db.owner(c) != kNoNode) cost[db.owner(c)] += db.sum(c, m);
  return cost;
}

std::vector<FlatRow> view_flat(const Database& db, const std::string& metric) {
  const DbMetricId exc = db.metric(metric, false).id, inc = db.metric(metric, true).id;
  const auto cost = routine_costs(db, exc);
  const auto& tree = db.tree();
  std::map<RoutineKey, FlatRow> rows;
  for (ContextId c : tree.preorder()) {
    const auto& n = tree.node(c);
    if (!n.key.is_routine()) continue;
    FlatRow& r = rows[routine_key(n)];
    r.routine = routine_key(n);
    r.label = db.label(c);
    r.module = module_name(db, n.key.module);
    r.exclusive += cost[c];
    ++r.instances;
    bool nested = false;
    for (ContextId a = n.parent; a != kNoNode && a != tree.root(); a = tree.node(a).parent)
      if (tree.node(a).key.is_routine() && routine_key(tree.node(a)) == r.routine) nested = true;
    if (!nested) r.inclusive += db.sum(c, inc);
  }
  std::vector<FlatRow> out;
  for (auto& [k, r] : rows) out.push_back(std::move(r));
  std::stable_sort(out.begin(), out.end(), [](const FlatRow& a, const FlatRow& b) {
    if (a.exclusive != b.exclusive) return a.exclusive > b.exclusive;
    return a.label < b.label;
  });
  return out;
}

namespace {

// `instances` pairs a routine context with the callee cost under it.
std::vector<BottomUpRow> callers_of(const Database& db,
                                    const std::vector<std::pair<ContextId, std::uint64_t>>& instances) {
  const auto& tree = db.tree();
  struct Group {
    std::string label;
    std::uint64_t cost = 0;
    std::vector<std::pair<ContextId, std::uint64_t>> next;
  };
  std::map<std::pair<int, RoutineKey>, Group> groups;  // program root sorts first
  for (const auto& [inst, cost] : instances) {
    const ContextId parent = tree.node(inst).parent;
    const ContextId caller = parent == kNoNode || parent == tree.root() ? kNoNode : db.owner(parent);
    if (caller == kNoNode) {
      Group& g = groups[{0, RoutineKey{}}];
      g.label = "<program root>";
      g.cost += cost;
      continue;
    }
    Group& g = groups[{1, routine_key(tree.node(caller))}];
    g.label = db.label(caller);
    g.cost += cost;
    g.next.emplace_back(caller, cost);
  }
  std::vector<BottomUpRow> rows;
  for (auto& [k, g] : groups) {
    BottomUpRow r{g.label, g.cost, {}};
    if (!g.next.empty()) r.callers = callers_of(db, g.next);
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BottomUpRow& a, const BottomUpRow& b) { return a.cost > b.cost; });
  return rows;
}

}  // namespace

std::vector<BottomUpRow> view_bottomup(const Database& db, const std::string& function,
                                       const std::string& metric) {
  const auto cost = routine_costs(db, db.metric(metric, false).id);
  std::vector<std::pair<ContextId, std::uint64_t>> instances;
  for (ContextId c : db.tree().preorder())
    if (db.tree().node(c).key.is_routine() && db.label(c) == function) instances.emplace_back(c, cost[c]);
  if (instances.empty()) throw Error(Errc::UnknownFunction, "no function named '" + function + "'");
  return callers_of(db, instances);
}

std::vector<PlotPoint> plot_thread_metric(const Database& db, ContextId c, DbMetricId m) {
  db.context(c);
  db.metric(m);
  std::vector<PlotPoint> out;
  for (const auto& [p, v] : db.cms().scan(c, m)) out.push_back({p, db.meta().profiles.at(p).id, v});
  return out;
}

}  // namespace gpuprof::analysis
