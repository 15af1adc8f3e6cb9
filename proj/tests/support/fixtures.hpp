#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <random>
#include <string>
#include <vector>

#include "gpuprof/analysis/database.hpp"
#include "gpuprof/core/context.hpp"
#include "gpuprof/core/metrics.hpp"
#include "gpuprof/gpucct/reconstruct.hpp"

namespace gpuprof::fixture {

using analysis::TraceLine;

// ---- GPU binaries ---------------------------------------------------------------

inline constexpr ModuleId kGpuModule = 3;

inline gpucct::GpuInstruction inst(std::uint64_t off) { return {off, 1, 0, StallReason::None, std::nullopt}; }
inline gpucct::GpuInstruction call(std::uint64_t off, std::uint32_t callee) {
  return {off, 1, 0, StallReason::None, callee};
}

// A calls B (never sampled at the call) and C; B and C call D; D and E call
// each other.
inline gpucct::GpuBinary fig4_binary() {
  return gpucct::GpuBinary("k", {{"A", 0x100, true, {inst(0x100), call(0x110, 1), call(0x120, 2)}},
                                 {"B", 0x200, false, {inst(0x200), call(0x210, 3)}},
                                 {"C", 0x300, false, {inst(0x300), call(0x310, 3)}},
                                 {"D", 0x400, false, {inst(0x400), call(0x410, 4)}},
                                 {"E", 0x500, false, {inst(0x500), call(0x510, 3)}}});
}

inline gpucct::AddressCounts fig4_samples() {
  return {{0x100, 2}, {0x120, 3}, {0x200, 4}, {0x210, 1}, {0x300, 1},
          {0x310, 2}, {0x400, 6}, {0x410, 1}, {0x500, 3}, {0x510, 1}};
}

inline gpucct::InstructionMetrics as_metrics(const gpucct::AddressCounts& counts, MetricId m) {
  gpucct::InstructionMetrics out;
  for (const auto& [a, v] : counts) out[a].emplace_back(m, v);
  return out;
}

struct RandomGraph {
  gpucct::GpuBinary binary;
  gpucct::InstructionMetrics metrics;
  MetricId weight_metric = 0;
  bool exact = false;
};

/// 2..7 functions with random calls (cycles and self-loops included); the
/// kernel is function 0 at 0x100. Odd `index` uses exact counts.
inline RandomGraph random_graph(std::mt19937_64& rng, int index) {
  const int nf = 2 + static_cast<int>(rng() % 6);
  std::vector<gpucct::GpuFunction> fns;
  std::uint64_t off = 0x100;
  for (int f = 0; f < nf; ++f) {
    gpucct::GpuFunction fn{"f" + std::to_string(f), off, f == 0, {}};
    const int ni = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < ni; ++i, off += 0x10)
      fn.instructions.push_back(rng() % 10 < 4 ? call(off, static_cast<std::uint32_t>(rng() % nf)) : inst(off));
    fns.push_back(std::move(fn));
    off += 0x40;
  }
  RandomGraph g{gpucct::GpuBinary("k", fns), {}, 0, index % 2 == 1};
  g.weight_metric = g.exact ? metrics::gpu_inst_exec : metrics::gpu_inst_samples;
  for (const auto& fn : g.binary.functions())
    for (const auto& in : fn.instructions) {
      if (rng() % 3 == 0) continue;
      g.metrics[in.offset].emplace_back(g.weight_metric, rng() % 40);
      if (!g.exact) g.metrics[in.offset].emplace_back(metrics::gpu_stall_samples, rng() % 7);
    }
  return g;
}

// ---- trace lines ----------------------------------------------------------------

/// main { solve { line, sync placeholder }, io, kernel placeholder }.
struct BlameTree {
  ContextTree tree;
  std::vector<LoadModule> modules{{1, "app"}};
  std::vector<std::string> leaf_routine;  // by context
  ContextId main = 0, solve = 0, solve_line = 0, sync = 0, io = 0, kernel = 0;

  BlameTree() {
    auto fn = [&](ContextId parent, std::uint64_t rec, const std::string& name) {
      return tree.child(parent, {ContextKind::Function, 1, rec, 0}, {name, "app.c", 1, 0, 0});
    };
    main = fn(0, 1, "main");
    solve = fn(main, 2, "solve");
    solve_line = tree.child(solve, {ContextKind::Line, 1, 3, 0}, {"solve", "app.c", 7, 0, 0});
    sync = tree.child(solve, {ContextKind::Placeholder, 1, 0, 3}, {"sync", "", 0, 0, 0});
    io = fn(main, 5, "io");
    kernel = tree.child(main, {ContextKind::Placeholder, 1, 0x100, 0}, {"kern", "", 0, 0, 0});
    leaf_routine.resize(tree.size());
    for (ContextId c = 1; c < tree.size(); ++c) {
      ContextId r = c;
      while (tree.node(r).key.kind != ContextKind::Function) r = tree.node(r).parent;
      leaf_routine[c] = tree.node(r).info.name;
    }
  }
};

inline TraceLine trace_line(ProfileIdTuple id, std::vector<TraceRecord> recs) { return {0, id, std::move(recs)}; }

/// One or two ranks, each with 1-2 GPU streams and 1-3 CPU threads;
/// timestamps may repeat.
inline std::vector<TraceLine> random_blame_lines(const BlameTree& f, std::mt19937_64& rng) {
  const std::vector<ContextId> cpu_ctx{0, f.main, f.solve, f.solve_line, f.sync, f.io};
  std::vector<TraceLine> lines;
  const int ranks = 1 + static_cast<int>(rng() % 2);
  for (int rk = 0; rk < ranks; ++rk) {
    const int streams = 1 + static_cast<int>(rng() % 2), threads = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < streams + threads; ++i) {
      const bool gpu = i < streams;
      std::vector<TraceRecord> recs;
      std::uint64_t t = rng() % 20;
      const int n = 1 + static_cast<int>(rng() % 8);
      for (int k = 0; k < n; ++k) {
        const ContextId c = gpu ? (rng() % 2 ? f.kernel : 0) : cpu_ctx[rng() % cpu_ctx.size()];
        recs.push_back({t, c});
        t += rng() % 30;
      }
      recs.push_back({t, 0});
      lines.push_back(trace_line(gpu ? ProfileIdTuple::gpu(0, rk, 0, i) : ProfileIdTuple::cpu(0, rk, i), recs));
    }
  }
  return lines;
}

}  // namespace gpuprof::fixture
