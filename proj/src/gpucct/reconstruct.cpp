#include "gpuprof/gpucct/reconstruct.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <stdexcept>

#include "gpuprof/core/metrics.hpp"
#include "gpuprof/error.hpp"

namespace gpuprof::gpucct {

CallGraph build_call_graph(const GpuBinary& binary, const AddressCounts& counts) {
  CallGraph g;
  g.binary = &binary;
  g.interior.assign(binary.functions().size(), 0);
  for (const auto& [addr, n] : counts) {
    auto loc = binary.locate(addr);
    if (!loc) throw Error(Errc::UnknownAddress, "no instruction at " + std::to_string(addr) + " in " + binary.module());
    g.interior[loc->first] += n;
  }
  for (const auto& cs : binary.call_sites()) {
    auto it = counts.find(cs.site);
    g.edges.push_back({cs.site, cs.caller, cs.callee, it == counts.end() ? 0 : it->second});
  }
  return g;
}

CallGraph propagate_weights(CallGraph g) {
  const std::size_t nf = g.interior.size();
  std::vector<std::vector<std::size_t>> incoming(nf);
  for (std::size_t e = 0; e < g.edges.size(); ++e) incoming[g.edges[e].callee].push_back(e);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<bool> active(nf, false);
    for (std::size_t f = 0; f < nf; ++f) active[f] = g.interior[f] > 0;
    for (const auto& e : g.edges)
      if (e.weight > 0) active[e.caller] = true;
    for (std::size_t f = 0; f < nf; ++f) {
      if (!active[f] || incoming[f].empty()) continue;
      bool all_zero = std::all_of(incoming[f].begin(), incoming[f].end(),
                                  [&](std::size_t e) { return g.edges[e].weight == 0; });
      if (!all_zero) continue;
      for (std::size_t e : incoming[f]) g.edges[e].weight = 1;
      changed = true;
    }
  }
  return g;
}

CallDag contract_sccs(const CallGraph& g) {
  const std::uint32_t nf = static_cast<std::uint32_t>(g.interior.size());
  std::vector<std::vector<std::uint32_t>> succ(nf);
  std::vector<bool> self_loop(nf, false);
  for (const auto& e : g.edges) {
    succ[e.caller].push_back(e.callee);
    if (e.caller == e.callee) self_loop[e.caller] = true;
  }

  // Tarjan's algorithm.
  std::vector<int> index(nf, -1), low(nf, 0);
  std::vector<bool> on_stack(nf, false);
  std::vector<std::uint32_t> stack;
  std::vector<std::vector<std::uint32_t>> comps;
  int counter = 0;
  std::function<void(std::uint32_t)> strong = [&](std::uint32_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::uint32_t w : succ[v]) {
      if (index[w] < 0) {
        strong(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::uint32_t> comp;
      std::uint32_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      comps.push_back(std::move(comp));
    }
  };
  for (std::uint32_t v = 0; v < nf; ++v)
    if (index[v] < 0) strong(v);

  // Canonical node order: by smallest member function index.
  std::sort(comps.begin(), comps.end());
  CallDag dag;
  dag.binary = g.binary;
  dag.node_of.assign(nf, 0);
  for (std::uint32_t n = 0; n < comps.size(); ++n) {
    DagNode node;
    node.members = comps[n];
    node.scc = comps[n].size() >= 2 || self_loop[comps[n][0]];
    std::uint64_t interior = 0;
    for (std::uint32_t f : comps[n]) {
      dag.node_of[f] = n;
      interior += g.interior[f];
    }
    dag.nodes.push_back(std::move(node));
    dag.interior.push_back(interior);
  }
  for (const auto& e : g.edges) {
    std::uint32_t a = dag.node_of[e.caller], b = dag.node_of[e.callee];
    if (a == b) continue;
    dag.edges.push_back({e.site, a, b, e.weight});
  }
  return dag;
}

std::vector<std::uint32_t> CallDag::topological_order() const {
  std::vector<std::size_t> indeg(nodes.size(), 0);
  std::vector<std::vector<std::uint32_t>> succ(nodes.size());
  for (const auto& e : edges) {
    ++indeg[e.to];
    succ[e.from].push_back(e.to);
  }
  std::priority_queue<std::uint32_t, std::vector<std::uint32_t>, std::greater<>> ready;
  for (std::uint32_t n = 0; n < nodes.size(); ++n)
    if (indeg[n] == 0) ready.push(n);
  std::vector<std::uint32_t> order;
  while (!ready.empty()) {
    std::uint32_t n = ready.top();
    ready.pop();
    order.push_back(n);
    for (std::uint32_t m : succ[n])
      if (--indeg[m] == 0) ready.push(m);
  }
  if (order.size() != nodes.size()) throw std::logic_error("call dag has a cycle");
  return order;
}

std::vector<GpuContext> enumerate_contexts(const CallDag& dag, std::uint32_t entry) {
  const std::size_t nn = dag.nodes.size();
  std::vector<std::vector<std::uint32_t>> out(nn);
  for (std::uint32_t e = 0; e < dag.edges.size(); ++e) out[dag.edges[e].from].push_back(e);

  std::vector<bool> reach(nn, false);
  std::vector<std::uint32_t> stack{entry};
  reach[entry] = true;
  while (!stack.empty()) {
    std::uint32_t n = stack.back();
    stack.pop_back();
    for (std::uint32_t e : out[n])
      if (!reach[dag.edges[e].to]) {
        reach[dag.edges[e].to] = true;
        stack.push_back(dag.edges[e].to);
      }
  }
  std::vector<std::uint64_t> w_in(nn, 0), n_in(nn, 0);
  for (const auto& e : dag.edges)
    if (reach[e.from]) {
      w_in[e.to] += e.weight;
      ++n_in[e.to];
    }
  auto share = [&](const DagEdge& e) -> Rational {
    if (w_in[e.to] == 0) return Rational(1, n_in[e.to]);
    return Rational(e.weight, w_in[e.to]);
  };

  std::vector<GpuContext> contexts;
  std::vector<std::uint32_t> path;
  std::function<void(std::uint32_t, const Rational&)> visit = [&](std::uint32_t n, const Rational& f) {
    contexts.push_back({n, path, f});
    for (std::uint32_t e : out[n]) {
      path.push_back(e);
      visit(dag.edges[e].to, f * share(dag.edges[e]));
      path.pop_back();
    }
  };
  visit(entry, Rational(1));
  return contexts;
}

std::vector<std::uint64_t> split_counts(std::uint64_t total, const std::vector<Rational>& fractions) {
  using boost::multiprecision::cpp_int;
  std::vector<std::uint64_t> out(fractions.size(), 0);
  if (fractions.empty()) return out;
  std::uint64_t assigned = 0;
  std::size_t best = 0;
  Rational best_frac(-1);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    Rational s = fractions[i] * total;
    cpp_int fl = boost::multiprecision::numerator(s) / boost::multiprecision::denominator(s);
    out[i] = fl.convert_to<std::uint64_t>();
    assigned += out[i];
    Rational part = s - Rational(fl);
    if (part > best_frac) {
      best_frac = part;
      best = i;
    }
  }
  out[best] += total - assigned;
  return out;
}

Reconstruction reconstruct(const GpuBinary& binary, ModuleId module, std::uint64_t kernel_entry,
                           const InstructionMetrics& metrics,
                           std::shared_ptr<const MetricTable> table) {
  auto kernel = binary.function_by_entry(kernel_entry);
  if (!kernel)
    throw Error(Errc::UnknownFunction, "no function at entry " + std::to_string(kernel_entry) + " in " + binary.module());

  Reconstruction r{CallingContextTree(std::move(table)), {}, false};
  for (const auto& [addr, vals] : metrics)
    for (const auto& [m, v] : vals)
      if (m == metrics::gpu_inst_exec && v > 0) r.exact = true;
  const MetricId weight_metric = r.exact ? metrics::gpu_inst_exec : metrics::gpu_inst_samples;

  AddressCounts counts;
  for (const auto& [addr, vals] : metrics) {
    if (!binary.locate(addr))
      throw Error(Errc::UnknownAddress, "no instruction at " + std::to_string(addr) + " in " + binary.module());
    for (const auto& [m, v] : vals)
      if (m == weight_metric) counts[addr] += v;
  }
  CallGraph graph = build_call_graph(binary, counts);
  if (!r.exact) graph = propagate_weights(std::move(graph));
  CallDag dag = contract_sccs(graph);
  const std::uint32_t entry = dag.node_of[*kernel];
  std::vector<GpuContext> contexts = enumerate_contexts(dag, entry);

  std::vector<std::vector<std::size_t>> by_node(dag.nodes.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) by_node[contexts[i].node].push_back(i);

  auto scc_frame = [&](std::uint32_t node) {
    std::uint64_t rep = UINT64_MAX;
    for (std::uint32_t f : dag.nodes[node].members) rep = std::min(rep, binary.functions()[f].entry);
    return Frame::gpu_scc({module, rep});
  };
  auto context_frames = [&](const GpuContext& c) {
    std::vector<Frame> frames;
    if (dag.nodes[entry].scc) frames.push_back(scc_frame(entry));
    for (std::uint32_t e : c.edges) {
      frames.push_back(Frame::gpu_call_site({module, dag.edges[e].site}));
      if (dag.nodes[dag.edges[e].to].scc) frames.push_back(scc_frame(dag.edges[e].to));
    }
    return frames;
  };
  std::vector<NodeId> context_node(contexts.size(), kNoNode);
  auto node_for = [&](std::size_t ci) {
    if (context_node[ci] == kNoNode) {
      auto frames = context_frames(contexts[ci]);
      context_node[ci] = frames.empty() ? r.subtree.root() : r.subtree.insert_call_path(frames);
    }
    return context_node[ci];
  };

  std::vector<bool> disconnected(binary.functions().size(), false);
  for (const auto& [addr, vals] : metrics) {
    std::uint32_t fn = binary.locate(addr)->first;
    std::uint32_t node = dag.node_of[fn];
    const Frame leaf = Frame::gpu_instruction({module, addr});
    if (by_node[node].empty()) {
      bool any = false;
      for (const auto& [m, v] : vals)
        if (v > 0) {
          r.subtree.add_metric(r.subtree.child(r.subtree.root(), leaf), m, v);
          any = true;
        }
      if (any) disconnected[fn] = true;
      continue;
    }
    const auto& ctx = by_node[node];
    std::vector<Rational> fractions;
    fractions.reserve(ctx.size());
    for (std::size_t ci : ctx) fractions.push_back(contexts[ci].fraction);
    for (const auto& [m, v] : vals) {
      if (v == 0) continue;
      auto parts = split_counts(v, fractions);
      for (std::size_t k = 0; k < ctx.size(); ++k)
        if (parts[k] > 0) r.subtree.add_metric(r.subtree.child(node_for(ctx[k]), leaf), m, parts[k]);
    }
  }
  for (std::uint32_t f = 0; f < disconnected.size(); ++f)
    if (disconnected[f]) r.disconnected.push_back(binary.functions()[f].name);
  return r;
}

}  // namespace gpuprof::gpucct
