#pragma once

// Test helpers and independent reference implementations. Nothing here
// calls into the code under test for the quantity being checked.

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gpuprof/aggregator/aggregate.hpp"
#include "gpuprof/analysis/database.hpp"
#include "gpuprof/core/context.hpp"
#include "gpuprof/formats/sparse_db.hpp"
#include "gpuprof/gen/generate.hpp"
#include "gpuprof/gpucct/gpubin.hpp"
#include "gpuprof/pipeline/run.hpp"

namespace gpuprof::oracle {

namespace fs = std::filesystem;
using Rational = boost::multiprecision::cpp_rational;

// ---- filesystem ----------------------------------------------------------------

/// A fresh directory below the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gpuprof") {
    std::random_device rd;
    for (;;) {
      path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()));
      if (fs::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string str(const std::string& sub = "") const { return sub.empty() ? path_.string() : (path_ / sub).string(); }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Every regular file below `dir`, by relative path.
inline std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

// ---- end-to-end fixtures ----------------------------------------------------------

struct Workspace {
  std::string input;         // gen output
  std::string measurements;  // run output
  std::string db;            // prof output
};

/// gen -> run -> prof below `root`.
inline Workspace build_database(const fs::path& root, const gen::GenOptions& opt,
                                const aggregator::AggregationPlan& plan = {}, bool structure = true) {
  Workspace w{(root / "in").string(), (root / "meas").string(), (root / "db").string()};
  gen::write_generated(gen::generate(opt), w.input);
  pipeline::run_workload(pipeline::load_workload(w.input + "/workload.spec"), w.measurements);
  aggregator::aggregate(w.measurements, structure ? w.input + "/structure" : "", w.db, plan);
  return w;
}

// ---- dense value cubes -------------------------------------------------------------

struct DenseCube {
  formats::CubeShape shape;
  std::vector<std::uint64_t> values;  // [p][c][m]

  std::uint64_t& at(std::uint32_t p, std::uint32_t c, std::uint32_t m) {
    return values[(std::size_t(p) * shape.contexts + c) * shape.metrics + m];
  }
  std::uint64_t at(std::uint32_t p, std::uint32_t c, std::uint32_t m) const {
    return values[(std::size_t(p) * shape.contexts + c) * shape.metrics + m];
  }
};

inline DenseCube random_cube(formats::CubeShape shape, double density, std::uint64_t seed) {
  DenseCube cube{shape, std::vector<std::uint64_t>(std::size_t(shape.profiles) * shape.contexts * shape.metrics, 0)};
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution hit(density);
  std::uniform_int_distribution<std::uint64_t> val(1, UINT64_MAX);
  for (auto& v : cube.values)
    if (hit(rng)) v = val(rng);
  return cube;
}

inline std::vector<formats::PmsPlane> pms_planes(const DenseCube& cube) {
  std::vector<formats::PmsPlane> planes(cube.shape.profiles);
  for (std::uint32_t p = 0; p < cube.shape.profiles; ++p)
    for (std::uint32_t c = 0; c < cube.shape.contexts; ++c)
      for (std::uint32_t m = 0; m < cube.shape.metrics; ++m)
        if (auto v = cube.at(p, c, m)) planes[p].push_back({c, static_cast<formats::DbMetricId>(m), v});
  return planes;
}

inline std::vector<formats::CmsPlane> cms_planes(const DenseCube& cube) {
  std::vector<formats::CmsPlane> planes(cube.shape.contexts);
  for (std::uint32_t c = 0; c < cube.shape.contexts; ++c)
    for (std::uint32_t m = 0; m < cube.shape.metrics; ++m)
      for (std::uint32_t p = 0; p < cube.shape.profiles; ++p)
        if (auto v = cube.at(p, c, m)) planes[c].push_back({static_cast<formats::DbMetricId>(m), p, v});
  return planes;
}

// ---- statistics ---------------------------------------------------------------------

struct TwoPass {
  long double mean = 0;
  long double stddev = 0;
  long double cv = 0;
};

/// Population statistics by the textbook two-pass method.
inline TwoPass two_pass(const std::vector<std::uint64_t>& xs) {
  TwoPass r;
  if (xs.empty()) return r;
  long double s = 0;
  for (auto x : xs) s += static_cast<long double>(x);
  r.mean = s / xs.size();
  long double ss = 0;
  for (auto x : xs) {
    const long double d = static_cast<long double>(x) - r.mean;
    ss += d * d;
  }
  r.stddev = std::sqrt(ss / xs.size());
  r.cv = r.mean == 0 ? 0 : r.stddev / r.mean;
  return r;
}

inline bool close_rel(long double a, long double b, long double tol = 1e-9) {
  if (a == b) return true;
  return std::fabs(a - b) <= tol * std::max({std::fabs(a), std::fabs(b), 1e-300L});
}

// ---- GPU calling contexts ---------------------------------------------------------------

/// Expected reconstruction of one kernel launch, computed by exhaustive path
/// enumeration over a transitive-closure SCC condensation. Keys are the frame
/// paths below the placeholder, ending with the instruction frame.
inline std::map<std::pair<std::vector<Frame>, MetricId>, std::uint64_t> brute_force_gpu_contexts(
    const gpucct::GpuBinary& bin, ModuleId module, std::uint32_t kernel,
    const std::map<std::uint64_t, std::vector<std::pair<MetricId, std::uint64_t>>>& metrics,
    MetricId weight_metric, bool propagate) {
  const auto& fns = bin.functions();
  const std::size_t n = fns.size();

  struct Edge {
    std::uint64_t site;
    std::uint32_t caller, callee;
    std::uint64_t w;
  };
  std::vector<Edge> edges;
  std::map<std::uint64_t, std::uint32_t> owner;
  for (std::uint32_t f = 0; f < n; ++f)
    for (const auto& in : fns[f].instructions) {
      owner[in.offset] = f;
      if (in.callee) edges.push_back({in.offset, f, *in.callee, 0});
    }
  std::vector<std::uint64_t> interior(n, 0);
  for (const auto& [addr, vals] : metrics)
    for (const auto& [m, v] : vals)
      if (m == weight_metric) {
        interior[owner.at(addr)] += v;
        for (auto& e : edges)
          if (e.site == addr) e.w += v;
      }

  if (propagate) {
    for (bool changed = true; changed;) {
      changed = false;
      for (std::uint32_t f = 0; f < n; ++f) {
        bool active = interior[f] > 0;
        for (const auto& e : edges) active = active || (e.caller == f && e.w > 0);
        bool has_in = false, all_zero = true;
        for (const auto& e : edges)
          if (e.callee == f) {
            has_in = true;
            all_zero = all_zero && e.w == 0;
          }
        if (active && has_in && all_zero) {
          for (auto& e : edges)
            if (e.callee == f) e.w = 1;
          changed = true;
        }
      }
    }
  }

  // Components from the transitive closure.
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::uint32_t f = 0; f < n; ++f) reach[f][f] = true;
  for (const auto& e : edges) reach[e.caller][e.callee] = true;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  std::vector<std::uint32_t> comp(n);
  for (std::uint32_t f = 0; f < n; ++f) {
    comp[f] = f;
    for (std::uint32_t g = 0; g < f; ++g)
      if (reach[f][g] && reach[g][f]) {
        comp[f] = comp[g];
        break;
      }
  }
  auto is_scc = [&](std::uint32_t c) {
    int members = 0;
    for (std::uint32_t f = 0; f < n; ++f) members += comp[f] == c;
    if (members > 1) return true;
    for (const auto& e : edges)
      if (e.caller == c && e.callee == c) return true;
    return false;
  };
  auto scc_frame = [&](std::uint32_t c) {
    std::uint64_t rep = UINT64_MAX;
    for (std::uint32_t f = 0; f < n; ++f)
      if (comp[f] == c) rep = std::min(rep, fns[f].entry);
    return Frame::gpu_scc({module, rep});
  };

  // Inter-component edges, by site.
  std::vector<Edge> dag;
  for (const auto& e : edges)
    if (comp[e.caller] != comp[e.callee]) dag.push_back({e.site, comp[e.caller], comp[e.callee], e.w});
  std::sort(dag.begin(), dag.end(), [](const Edge& a, const Edge& b) { return a.site < b.site; });

  const std::uint32_t entry = comp[kernel];
  std::vector<bool> reachable(n, false);
  for (std::uint32_t f = 0; f < n; ++f) reachable[comp[f]] = reachable[comp[f]] || reach[kernel][f];

  std::map<std::uint32_t, std::uint64_t> w_in, n_in;
  for (const auto& e : dag)
    if (reachable[e.caller]) {
      w_in[e.callee] += e.w;
      ++n_in[e.callee];
    }

  // Every path from the entry component.
  struct Path {
    std::uint32_t comp;
    std::vector<Frame> frames;
    Rational fraction;
    std::vector<std::uint64_t> sites;
  };
  std::vector<Path> paths;
  std::vector<Path> work{{entry, {}, Rational(1), {}}};
  if (is_scc(entry)) work.back().frames.push_back(scc_frame(entry));
  while (!work.empty()) {
    Path p = work.back();
    work.pop_back();
    paths.push_back(p);
    for (const auto& e : dag) {
      if (e.caller != p.comp) continue;
      Path q{e.callee, p.frames, p.fraction, p.sites};
      q.sites.push_back(e.site);
      q.frames.push_back(Frame::gpu_call_site({module, e.site}));
      if (is_scc(e.callee)) q.frames.push_back(scc_frame(e.callee));
      q.fraction *= w_in[e.callee] == 0 ? Rational(1, n_in[e.callee]) : Rational(e.w, w_in[e.callee]);
      work.push_back(std::move(q));
    }
  }
  // Depth-first order with edges by ascending site is the lexicographic
  // order of site sequences.
  std::sort(paths.begin(), paths.end(), [](const Path& a, const Path& b) { return a.sites < b.sites; });

  std::map<std::pair<std::vector<Frame>, MetricId>, std::uint64_t> out;
  for (const auto& [addr, vals] : metrics) {
    const std::uint32_t c = comp[owner.at(addr)];
    std::vector<const Path*> mine;
    for (const auto& p : paths)
      if (p.comp == c) mine.push_back(&p);
    for (const auto& [m, v] : vals) {
      if (v == 0) continue;
      if (mine.empty()) {
        out[{{Frame::gpu_instruction({module, addr})}, m}] += v;
        continue;
      }
      // Floors, then the residue to the largest remainder (earliest on ties).
      std::vector<std::uint64_t> part(mine.size());
      std::uint64_t given = 0;
      std::size_t best = 0;
      Rational best_rem(-1);
      for (std::size_t i = 0; i < mine.size(); ++i) {
        const Rational s = mine[i]->fraction * v;
        const boost::multiprecision::cpp_int fl = numerator(s) / denominator(s);
        part[i] = fl.convert_to<std::uint64_t>();
        given += part[i];
        if (s - Rational(fl) > best_rem) {
          best_rem = s - Rational(fl);
          best = i;
        }
      }
      part[best] += v - given;
      for (std::size_t i = 0; i < mine.size(); ++i) {
        if (part[i] == 0) continue;
        auto frames = mine[i]->frames;
        frames.push_back(Frame::gpu_instruction({module, addr}));
        out[{frames, m}] += part[i];
      }
    }
  }
  return out;
}

/// Leaf values of a reconstructed subtree in the same keying.
inline std::map<std::pair<std::vector<Frame>, MetricId>, std::uint64_t> tree_values(
    const CallingContextTree& t) {
  std::map<std::pair<std::vector<Frame>, MetricId>, std::uint64_t> out;
  for (NodeId id = 0; id < t.size(); ++id)
    for (const auto& [m, v] : t.node(id).metric_values()) out[{t.path_to(id), m}] += v;
  return out;
}

// ---- blame ----------------------------------------------------------------------------

/// GPU idleness blame by stepping every nanosecond of each scope. Returns
/// blamed time per routine label.
inline std::map<std::string, Rational> brute_force_blame(const ContextTree& tree,
                                                         const std::vector<analysis::TraceLine>& lines,
                                                         const std::vector<std::string>& routine_label,
                                                         bool per_rank) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<const analysis::TraceLine*>> scopes;
  for (const auto& l : lines) scopes[per_rank ? std::make_pair(l.id.node, l.id.rank) : std::make_pair(0u, 0u)].push_back(&l);
  std::map<std::string, Rational> out;
  for (const auto& [key, ls] : scopes) {
    std::uint64_t lo = UINT64_MAX, hi = 0;
    bool any_gpu = false;
    for (const auto* l : ls) {
      any_gpu = any_gpu || l->id.is_gpu();
      for (const auto& r : l->records) {
        lo = std::min(lo, r.timestamp);
        hi = std::max(hi, r.timestamp);
      }
    }
    if (!any_gpu || lo >= hi) continue;
    for (std::uint64_t t = lo; t < hi; ++t) {
      bool busy = false;
      std::vector<std::string> active;
      for (const auto* l : ls) {
        ContextId c = 0;
        for (const auto& r : l->records)
          if (r.timestamp <= t) c = r.cct_node_id;
        if (l->id.is_gpu()) {
          busy = busy || c != 0;
        } else if (c != 0 && tree.node(c).key.kind != ContextKind::Placeholder) {
          active.push_back(routine_label.at(c));
        }
      }
      if (busy || active.empty()) continue;
      for (const auto& a : active) out[a] += Rational(1, active.size());
    }
  }
  return out;
}

}  // namespace gpuprof::oracle
