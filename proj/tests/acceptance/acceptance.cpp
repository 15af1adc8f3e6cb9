// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 when
// any criterion fails. Runs at full scale; unit tests cover the details.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "gpuprof/aggregator/aggregate.hpp"
#include "gpuprof/aggregator/statistics.hpp"
#include "gpuprof/analysis/database.hpp"
#include "gpuprof/analysis/derived.hpp"
#include "gpuprof/analysis/trace_analysis.hpp"
#include "gpuprof/formats/bytes.hpp"
#include "gpuprof/formats/meta.hpp"
#include "gpuprof/formats/profile_file.hpp"
#include "gpuprof/formats/sparse_db.hpp"
#include "gpuprof/formats/structure.hpp"
#include "gpuprof/formats/trace_file.hpp"
#include "gpuprof/gen/generate.hpp"
#include "gpuprof/gpucct/reconstruct.hpp"
#include "gpuprof/pipeline/run.hpp"
#include "gpuprof/pipeline/spsc_queue.hpp"
#include "support/cli.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gpuprof;
namespace fs = std::filesystem;
using oracle::Rational;
using oracle::TempDir;

namespace {

/// Collects failed conditions of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::ostringstream os;
    const auto& items = ok() ? notes_ : failures_;
    for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "; " : "") << items[i];
    if (failed_ > failures_.size()) os << "; " << failed_ - failures_.size() << " more";
    return os.str();
  }

 private:
  std::vector<std::string> failures_, notes_;
  std::size_t failed_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<fs::path> files_with(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

bool non_decreasing(const std::vector<TraceRecord>& r) {
  return std::is_sorted(r.begin(), r.end(),
                        [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp < b.timestamp; });
}

// ---- criteria --------------------------------------------------------------------

void pipeline_conservation(Check& c) {
  std::vector<gen::GenOptions> cases{
      {.seed = 1, .threads = 1, .streams = 1, .ops = 100},
      {.seed = 2, .threads = 4, .streams = 2, .ops = 2000, .sampling = pipeline::SamplingMode::Instrumentation},
      {.seed = 3, .threads = 8, .streams = 4, .ops = 10000, .out_of_order = true},
      {.seed = 4, .threads = 8, .streams = 4, .ops = 10000},
  };
  double worst = 0;
  for (const auto& opt : cases) {
    TempDir dir("acc-pipe");
    const auto spec = gen::generate(opt).spec;
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = pipeline::run_workload(spec, dir.str("m"));
    const double secs = seconds_since(t0);
    worst = std::max(worst, secs);
    const std::string tag = std::to_string(opt.threads) + "x" + std::to_string(opt.streams) + "x" +
                            std::to_string(opt.ops) + " seed " + std::to_string(opt.seed);
    c.expect(s.generated > 0 && s.generated == s.attributed,
             tag + ": generated " + std::to_string(s.generated) + " attributed " + std::to_string(s.attributed));
    c.expect(s.orphans == 0, tag + ": " + std::to_string(s.orphans) + " orphans");
    c.expect(secs < 30, tag + ": " + std::to_string(secs) + " s");
    if (opt.ops == 10000 && !opt.out_of_order)
      c.note(std::to_string(s.generated) + " activities at " + tag + " in " + std::to_string(secs) + " s");
  }
  c.note("0 orphans, slowest run " + std::to_string(worst) + " s");
}

void spsc_stress(Check& c) {
  constexpr std::uint64_t kItems = 1000000;
  auto run = [&](auto& q, auto push, const std::string& tag) {
    std::thread producer([&] {
      for (std::uint64_t i = 0; i < kItems;)
        if (push(q, i)) ++i;
        else std::this_thread::yield();
    });
    std::uint64_t expected = 0, misordered = 0;
    while (expected < kItems)
      if (auto v = q.pop()) {
        if (*v != expected) ++misordered;
        ++expected;
      } else {
        std::this_thread::yield();
      }
    producer.join();
    c.expect(misordered == 0, tag + ": " + std::to_string(misordered) + " out of order");
    c.expect(!q.pop().has_value(), tag + ": extra item after the last");
  };
  pipeline::SpscQueue<std::uint64_t> bounded(1024);
  run(bounded, [](auto& q, std::uint64_t i) { return q.push(i) == pipeline::PushResult::Accepted; }, "bounded");
  pipeline::ChainedSpscQueue<std::uint64_t> chained(64);
  run(chained, [](auto& q, std::uint64_t i) { q.push(i); return true; }, "chained");
  c.note("10^6 items in order through bounded and chained queues");
}

void format_round_trips(Check& c) {
  TempDir dir("acc-fmt");
  const auto w = oracle::build_database(dir.path(), {.seed = 7, .threads = 2, .streams = 2, .kernels = 3});
  std::size_t files = 0;
  for (const auto& f : files_with(w.measurements, ".prof")) {
    const auto bytes = formats::read_file(f.string());
    c.expect(formats::write_profile(formats::read_profile(bytes)) == bytes, "profile " + f.filename().string());
    c.expect(formats::encode_sections(formats::decode_sections(bytes)) == bytes, "sections " + f.filename().string());
    ++files;
  }
  for (const auto& f : files_with(fs::path(w.db) / "trace", ".trace")) {
    const auto bytes = formats::read_file(f.string());
    c.expect(formats::write_trace(formats::read_trace(bytes)) == bytes, "trace " + f.filename().string());
    ++files;
  }
  for (const auto& f : files_with(fs::path(w.input) / "structure", ".struct")) {
    const auto text = formats::read_text(f.string());
    c.expect(formats::write_structure(formats::parse_structure(text)) == text, "structure " + f.filename().string());
    ++files;
  }
  {
    const auto text = formats::read_text(w.db + "/meta");
    c.expect(formats::write_meta(formats::read_meta(text)) == text, "meta");
    const formats::PmsFile pms(formats::read_file(w.db + "/profile.pms"));
    const formats::CmsFile cms(formats::read_file(w.db + "/cct.cms"));
    c.expect(formats::write_pms(pms.shape(), formats::read_pms_planes(pms)) ==
                 formats::Bytes(pms.bytes().begin(), pms.bytes().end()),
             "profile.pms");
    c.expect(formats::write_cms(cms.shape(), formats::read_cms_planes(cms)) ==
                 formats::Bytes(cms.bytes().begin(), cms.bytes().end()),
             "cct.cms");
    files += 3;
  }

  std::size_t lookups = 0;
  for (double density : {0.01, 0.05, 0.20}) {
    const auto cube = oracle::random_cube({20, 50, 30}, density, static_cast<std::uint64_t>(density * 1000));
    const formats::PmsFile pms(formats::write_pms(cube.shape, oracle::pms_planes(cube)));
    const formats::CmsFile cms(formats::write_cms(cube.shape, oracle::cms_planes(cube)));
    std::size_t bad = 0;
    for (std::uint32_t p = 0; p < 20; ++p)
      for (std::uint32_t ctx = 0; ctx < 50; ++ctx)
        for (std::uint32_t m = 0; m < 30; ++m) {
          const std::uint64_t want = cube.at(p, ctx, m);
          const auto dm = static_cast<formats::DbMetricId>(m);
          if (pms.lookup(p, ctx, dm).value_or(0) != want) ++bad;
          if (cms.lookup(ctx, dm, p).value_or(0) != want) ++bad;
          if (want != 0 && (!pms.lookup(p, ctx, dm) || !cms.lookup(ctx, dm, p))) ++bad;
          lookups += 2;
        }
    c.expect(bad == 0, "dense oracle at " + std::to_string(density) + ": " + std::to_string(bad) + " mismatches");
  }
  c.note(std::to_string(files) + " files bit-exact, " + std::to_string(lookups) + " lookups equal the dense cube");
}

void sparse_size(Check& c) {
  TempDir dir("acc-size");
  const auto w = oracle::build_database(dir.path(), {.seed = 64, .threads = 48, .streams = 16, .kernels = 4});
  const formats::PmsFile pms(formats::read_file(w.db + "/profile.pms"));
  const formats::CmsFile cms(formats::read_file(w.db + "/cct.cms"));
  const auto shape = pms.shape();
  c.expect(shape.profiles == 64, "profiles " + std::to_string(shape.profiles));

  // Byte counts from the documented layout: a 20-byte header, one 8-byte
  // offset per plane, and per plane a 4-byte count, (index entries + 1
  // sentinel) pairs and one (key, 8-byte value) per non-zero.
  std::uint64_t nnz = 0, pms_bytes = 20 + 8ull * shape.profiles, cms_bytes = 20 + 8ull * shape.contexts;
  for (const auto& plane : formats::read_pms_planes(pms)) {
    std::set<formats::ContextId> ctxs;
    for (const auto& e : plane) ctxs.insert(e.context);
    pms_bytes += 4 + (4 + 8) * (ctxs.size() + 1) + (2 + 8) * plane.size();
    nnz += plane.size();
  }
  for (const auto& plane : formats::read_cms_planes(cms)) {
    std::set<formats::DbMetricId> mets;
    for (const auto& e : plane) mets.insert(e.metric);
    cms_bytes += 4 + (2 + 8) * (mets.size() + 1) + (4 + 8) * plane.size();
  }
  const double cells = double(shape.profiles) * shape.contexts * shape.metrics;
  const double density = nnz / cells, dense = cells * 8;
  const auto on_disk = fs::file_size(w.db + "/profile.pms") + fs::file_size(w.db + "/cct.cms");
  c.expect(density <= 0.05, "density " + std::to_string(density));
  c.expect(pms_bytes == fs::file_size(w.db + "/profile.pms"), "analytic PMS size differs from disk");
  c.expect(cms_bytes == fs::file_size(w.db + "/cct.cms"), "analytic CMS size differs from disk");
  const double ratio = (pms_bytes + cms_bytes) / dense;
  c.expect(ratio < 0.25, "sparse/dense " + std::to_string(ratio));
  char buf[200];
  std::snprintf(buf, sizeof buf, "%u x %u x %u cube, density %.4f, PMS+CMS %llu B = %.4f of dense %.0f B",
                shape.profiles, shape.contexts, shape.metrics, density, static_cast<unsigned long long>(on_disk),
                ratio, dense);
  c.note(buf);
}

void gpu_cct(Check& c) {
  using namespace gpucct;
  const GpuBinary bin = fixture::fig4_binary();
  const CallGraph raw = build_call_graph(bin, fixture::fig4_samples());
  const CallGraph g = propagate_weights(raw);
  auto weight_at = [](const CallGraph& graph, std::uint64_t site) {
    for (const auto& e : graph.edges)
      if (e.site == site) return e.weight;
    return std::uint64_t(~0ull);
  };
  c.expect(weight_at(raw, 0x110) == 0, "A->B edge sampled before repair");
  c.expect(weight_at(g, 0x110) == 1, "A->B edge weight " + std::to_string(weight_at(g, 0x110)));
  const CallDag dag = contract_sccs(g);
  c.expect(dag.node_of[3] == dag.node_of[4] && dag.nodes[dag.node_of[3]].scc &&
               dag.nodes[dag.node_of[3]].members == std::vector<std::uint32_t>{3, 4},
           "D/E not one SCC node");
  c.expect(dag.nodes.size() == 4 && dag.topological_order().size() == 4, "contracted graph is not a 4-node DAG");

  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 50; ++i) {
    const auto rg = fixture::random_graph(rng, i);
    const auto r = reconstruct(rg.binary, fixture::kGpuModule, 0x100, rg.metrics, metrics::standard());
    const auto got = oracle::tree_values(r.subtree);
    c.expect(got == oracle::brute_force_gpu_contexts(rg.binary, fixture::kGpuModule, 0, rg.metrics,
                                                     rg.weight_metric, !rg.exact),
             "graph " + std::to_string(i) + " differs from enumeration");
    std::map<std::pair<std::uint64_t, MetricId>, std::uint64_t> in, out;
    for (const auto& [a, vals] : rg.metrics)
      for (const auto& [id, v] : vals)
        if (v) in[{a, id}] += v;
    for (const auto& [key, v] : got) out[{key.first.back().addr.offset, key.second}] += v;
    c.expect(in == out, "graph " + std::to_string(i) + " does not conserve counts");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 5, std::to_string(secs) + " s for 50 graphs");
  c.note("propagation and SCC rules hold; 50 random graphs equal enumeration in " + std::to_string(secs) + " s");
}

void aggregation_equivalence(Check& c) {
  using cli_support::quote;
  TempDir dir("acc-agg");
  const auto w = oracle::build_database(dir.path() / "base", {.seed = 8, .threads = 4, .streams = 3, .ops = 200});
  std::map<std::string, std::string> ref;
  for (const auto& [g, t] : std::vector<std::pair<int, int>>{{1, 1}, {2, 2}, {4, 3}}) {
    const std::string out = dir.str("db-" + std::to_string(g) + "-" + std::to_string(t));
    const auto r = cli_support::run_cli("prof " + quote(w.measurements) + " -S " + quote(w.input + "/structure") +
                                        " -G " + std::to_string(g) + " -t " + std::to_string(t) + " -o " + quote(out));
    c.expect(r.code == 0, "prof -G " + std::to_string(g) + " failed: " + r.out);
    const auto contents = oracle::dir_contents(out);
    if (ref.empty()) ref = contents;
    else c.expect(contents == ref, "G=" + std::to_string(g) + " t=" + std::to_string(t) + " differs");
  }

  // Budgets for exactly k rounds under first-fit-in-order packing of the
  // CMS planes, whose sizes follow from the offset vector.
  const formats::CmsFile cms(formats::read_file(w.db + "/cct.cms"));
  const auto bytes = cms.bytes();
  const std::uint32_t C = cms.shape().contexts;
  std::vector<std::uint64_t> off(C + 1);
  for (std::uint32_t i = 0; i < C; ++i) {
    std::uint64_t v = 0;
    std::memcpy(&v, bytes.data() + 20 + 8ull * i, 8);
    off[i] = v;
  }
  off[C] = bytes.size();
  auto rounds_for = [&](std::uint64_t budget) {
    std::uint64_t rounds = 0;
    for (std::uint32_t lo = 0; lo < C;) {
      std::uint64_t held = off[lo + 1] - off[lo];
      std::uint32_t hi = lo + 1;
      while (hi < C && held + (off[hi + 1] - off[hi]) <= budget) held += off[hi + 1] - off[hi++];
      ++rounds;
      lo = hi;
    }
    return rounds;
  };
  const auto cms_ref = formats::read_file(w.db + "/cct.cms");
  std::ostringstream budgets;
  for (std::uint64_t k : {1, 3, 7}) {
    std::uint64_t lo = 1, hi = bytes.size();  // smallest budget with rounds <= k
    while (lo < hi) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      if (rounds_for(mid) <= k) hi = mid;
      else lo = mid + 1;
    }
    c.expect(rounds_for(lo) == k, "no budget gives " + std::to_string(k) + " rounds");
    aggregator::AggregationPlan plan{2, 2, lo};
    const std::string out = dir.str("cms-" + std::to_string(k));
    const auto s = aggregator::aggregate(w.measurements, w.input + "/structure", out, plan);
    c.expect(s.cms_rounds == k, "budget " + std::to_string(lo) + " ran " + std::to_string(s.cms_rounds) + " rounds");
    c.expect(formats::read_file(out + "/cct.cms") == cms_ref, std::to_string(k) + "-round cct.cms differs");
    c.expect(oracle::dir_contents(out) == ref, std::to_string(k) + "-round database differs");
    budgets << (k == 1 ? "" : ", ") << k << " rounds at " << lo << " B";
  }
  c.note("(G,t) in {(1,1),(2,2),(4,3)} identical; CMS " + budgets.str() + " identical");
}

void statistics(Check& c) {
  std::mt19937_64 rng(1000);
  int bad = 0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 1 + rng() % 300;
    const std::uint64_t scale = 1ull << (rng() % 40);
    std::vector<std::uint64_t> xs(n);
    for (auto& x : xs) x = 1 + rng() % scale;
    aggregator::Accumulator a, b;
    for (std::size_t i = 0; i < n; ++i) (i % 3 ? a : b).add(xs[i]);
    a.merge(b);
    const auto s = aggregator::finalize(a);
    const auto o = oracle::two_pass(xs);
    if (!oracle::close_rel(s.mean, o.mean) || !oracle::close_rel(s.stddev, o.stddev) || !oracle::close_rel(s.cv, o.cv))
      ++bad;
  }
  c.expect(bad == 0, std::to_string(bad) + " of 1000 sets off by more than 1e-9");
  aggregator::Accumulator f;
  for (std::uint64_t v : {2, 4, 6}) f.add(v);
  const auto s = aggregator::finalize(f);
  c.expect(s.mean == 4 && oracle::close_rel(s.stddev, std::sqrt(8.0L / 3)), "{2,4,6} stddev " + std::to_string(s.stddev));
  c.note("1000 sets within 1e-9 of two-pass; {2,4,6} stddev " + std::to_string(s.stddev));
}

void derived_metrics(Check& c) {
  const auto w = analysis::DerivedExpr::parse("(S - S_stall) / S").eval([](const analysis::MetricRef& r) {
    return r.name == "S" ? 100.0 : 75.0;
  });
  c.expect(w && *w == 0.25, "W = " + (w ? std::to_string(*w) : std::string("undefined")));

  TempDir dir("acc-derived");
  const auto ws = oracle::build_database(dir.path(), {.seed = 21, .threads = 3, .streams = 2, .kernels = 4});
  const auto spec = pipeline::load_workload(ws.input + "/workload.spec");
  const auto db = analysis::Database::open(ws.db);
  const auto values = analysis::eval_derived(
      db, analysis::DerivedExpr::parse(analysis::derived_presets().at("registers_per_kernel")));
  int checked = 0;
  for (ContextId ctx = 0; ctx < db.tree().size(); ++ctx) {
    const auto& n = db.tree().node(ctx);
    if (n.key.kind != ContextKind::Placeholder || n.key.sub != 0) continue;
    const auto* k = spec.find_kernel(n.info.name);
    c.expect(k && values[ctx] && *values[ctx] == static_cast<double>(k->regs), "registers at " + db.label(ctx));
    ++checked;
  }
  c.expect(checked > 0, "no kernel launch contexts");
  c.note("W = 0.25; registers exact at " + std::to_string(checked) + " launch contexts");
}

void blame(Check& c) {
  using analysis::blame_idleness;
  const fixture::BlameTree f;
  auto check_round = [&](const std::vector<analysis::TraceLine>& lines, bool per_rank, const std::string& tag) {
    analysis::BlameOptions opt;
    opt.per_rank = per_rank;
    const auto r = blame_idleness(f.tree, f.modules, lines, opt);
    Rational want = 0;
    std::map<std::string, Rational> want_by;
    for (const auto& [k, v] : oracle::brute_force_blame(f.tree, lines, f.leaf_routine, per_rank))
      if (v != 0) want_by[k] = v, want += v;
    std::map<std::string, Rational> got_by;
    for (const auto& e : r.entries) got_by[e.routine] = e.blamed;
    c.expect(r.total == want && got_by == want_by, tag + ": differs from the 1 ns sweep");
    if (!r.entries.empty()) {
      double s = 0;
      for (const auto& e : r.entries) s += e.share;
      c.expect(std::fabs(s - 1) <= 1e-9, tag + ": shares sum to " + std::to_string(s));
    }
  };
  const auto gpu = ProfileIdTuple::gpu(0, 0, 0, 0);
  const std::vector<analysis::TraceLine> hand{
      fixture::trace_line(gpu, {{0, f.kernel}, {10, 0}, {30, f.kernel}, {40, 0}}),
      fixture::trace_line(ProfileIdTuple::cpu(0, 0, 0), {{0, f.solve_line}, {25, f.io}, {50, 0}}),
      fixture::trace_line(ProfileIdTuple::cpu(0, 0, 1), {{5, f.main}, {20, f.sync}, {35, 0}}),
  };
  check_round(hand, true, "hand fixture");
  c.expect(blame_idleness(f.tree, f.modules, hand).total == 30, "hand fixture total");
  std::mt19937_64 rng(99);
  for (int round = 0; round < 200; ++round) {
    const auto lines = fixture::random_blame_lines(f, rng);
    check_round(lines, true, "round " + std::to_string(round) + " per rank");
    check_round(lines, false, "round " + std::to_string(round) + " global");
  }
  const std::vector<analysis::TraceLine> busy{
      fixture::trace_line(ProfileIdTuple::gpu(0, 0, 0, 0), {{0, f.kernel}, {100, f.kernel}}),
      fixture::trace_line(ProfileIdTuple::gpu(0, 0, 0, 1), {{0, 0}, {50, f.kernel}, {60, 0}}),
      fixture::trace_line(ProfileIdTuple::cpu(0, 0, 0), {{0, f.solve}, {100, 0}}),
  };
  const auto r = blame_idleness(f.tree, f.modules, busy);
  c.expect(r.entries.empty() && r.total == 0, "always-busy stream still blames");
  c.note("hand fixture and 200 random rounds equal the 1 ns sweep; always-busy stream gives an empty report");
}

void trace_sorting(Check& c) {
  TempDir dir("acc-sort");
  const auto w = oracle::build_database(dir.path(), {.seed = 5, .threads = 4, .streams = 4, .ops = 400, .out_of_order = true});
  const auto meta = formats::read_meta(formats::read_text(w.db + "/meta"));
  std::map<ProfileIdTuple, formats::TraceFile> finalized;
  for (const auto& p : meta.profiles)
    if (p.trace) {
      auto t = formats::read_trace(formats::read_file(w.db + "/" + *p.trace));
      finalized.emplace(t.id, std::move(t));
    }
  int flagged = 0, plain = 0;
  for (const auto& f : files_with(w.measurements, ".prof")) {
    const auto prof = formats::read_profile(formats::read_file(f.string()));
    if (!prof.trace) continue;
    const auto it = finalized.find(prof.id_tuple);
    if (it == finalized.end()) {
      c.expect(false, "no database trace for " + f.filename().string());
      continue;
    }
    const auto& out = it->second.records;
    auto stamps = [](const std::vector<TraceRecord>& r) {
      std::vector<std::uint64_t> s;
      for (const auto& x : r) s.push_back(x.timestamp);
      return s;
    };
    if (prof.trace->out_of_order) {
      ++flagged;
      c.expect(non_decreasing(out), f.filename().string() + " not sorted");
      auto in = stamps(prof.trace->records);
      std::sort(in.begin(), in.end());
      c.expect(in == stamps(out), f.filename().string() + " lost or gained records");
    } else {
      ++plain;
      c.expect(stamps(prof.trace->records) == stamps(out), f.filename().string() + " reordered");
      // Under the identity mapping nothing may change at all.
      std::vector<ContextId> identity(prof.cct.size());
      for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<ContextId>(i);
      const auto same = aggregator::finalize_trace(prof.id_tuple, *prof.trace, identity);
      c.expect(formats::write_trace(same) ==
                   formats::write_trace({prof.id_tuple, false, prof.trace->records}),
               f.filename().string() + " not byte-identical");
    }
  }
  c.expect(flagged > 0, "no stream was flagged out of order");
  c.expect(plain > 0, "no unflagged trace");

  std::mt19937_64 rng(17);
  for (int round = 0; round < 100; ++round) {
    Trace t{true, {}};
    const std::size_t n = 1 + rng() % 50;
    for (std::size_t i = 0; i < n; ++i) t.records.push_back({rng() % 40, static_cast<NodeId>(rng() % 4)});
    const std::vector<ContextId> map{0, 1, 2, 3};
    const auto f = aggregator::finalize_trace(ProfileIdTuple::gpu(0, 0, 0, 0), t, map);
    c.expect(non_decreasing(f.records), "random flagged trace " + std::to_string(round) + " not sorted");
    c.expect(std::is_permutation(f.records.begin(), f.records.end(), t.records.begin(), t.records.end()),
             "random flagged trace " + std::to_string(round) + " changed records");
  }
  c.note(std::to_string(flagged) + " flagged streams sorted, " + std::to_string(plain) +
         " unflagged traces unchanged, 100 random flagged traces sorted");
}

void end_to_end_golden(Check& c) {
  TempDir dir("acc-golden");
  const std::string err = cli_support::build_golden_db(dir.str());
  c.expect(err.empty(), err);
  if (!err.empty()) return;
  for (const auto& g : cli_support::golden_cases()) {
    const auto r = cli_support::run_cli(g.command + " " + cli_support::quote(dir.str("db")) + " " + g.args, false);
    c.expect(r.code == 0, g.file + ": exit " + std::to_string(r.code));
    const fs::path golden = fs::path(GOLDEN_DIR) / g.file;
    c.expect(fs::exists(golden) && r.out == oracle::slurp(golden), g.file + " differs from the golden");
  }
  c.note(std::to_string(cli_support::golden_cases().size()) + " query/blame outputs match");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"pipeline-conservation", pipeline_conservation},
      {"spsc-stress", spsc_stress},
      {"format-round-trips", format_round_trips},
      {"sparse-vs-dense-size", sparse_size},
      {"gpu-cct-reconstruction", gpu_cct},
      {"aggregation-equivalence", aggregation_equivalence},
      {"statistics", statistics},
      {"derived-metrics", derived_metrics},
      {"blame", blame},
      {"trace-sorting", trace_sorting},
      {"end-to-end-golden", end_to_end_golden},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.2fs", seconds_since(t0));
    std::cout << (c.ok() ? "PASS " : "FAIL ") << name << " (" << secs << "): " << c.summary() << std::endl;
    if (!c.ok()) ++failed;
  }
  std::cout << criteria.size() - failed << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
