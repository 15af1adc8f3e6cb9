#include <gtest/gtest.h>

#include "gpuprof/aggregator/aggregate.hpp"
#include "gpuprof/aggregator/statistics.hpp"
#include "gpuprof/analysis/database.hpp"
#include "gpuprof/core/metrics.hpp"
#include "gpuprof/error.hpp"
#include "gpuprof/formats/profile_file.hpp"
#include "support/oracles.hpp"

using namespace gpuprof;
using namespace gpuprof::aggregator;
namespace fs = std::filesystem;

namespace {

Stats stats_of(const std::vector<std::uint64_t>& xs) {
  Accumulator a;
  for (auto x : xs) a.add(x);
  return finalize(a);
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::IoError;
}

}  // namespace

TEST(Statistics, TwoFourSixFixture) {
  const Stats s = stats_of({2, 4, 6});
  EXPECT_EQ(s.n, 3u);
  EXPECT_EQ(s.sum, 12u);
  EXPECT_EQ(s.min, 2u);
  EXPECT_EQ(s.max, 6u);
  EXPECT_DOUBLE_EQ(s.mean, 4.0);
  EXPECT_NEAR(s.stddev, std::sqrt(8.0 / 3.0), 1e-12);
  EXPECT_NEAR(s.stddev, 1.63299, 1e-5);
  EXPECT_NEAR(s.cv, 0.40825, 1e-5);
}

TEST(Statistics, MatchesTwoPassOracle) {
  std::mt19937_64 rng(17);
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 1 + rng() % 50;
    const std::uint64_t scale = std::uint64_t(1) << (rng() % 40);
    std::vector<std::uint64_t> xs(n);
    for (auto& x : xs) x = 1 + rng() % scale;
    const Stats s = stats_of(xs);
    const auto o = oracle::two_pass(xs);
    ASSERT_TRUE(oracle::close_rel(s.mean, o.mean)) << set;
    ASSERT_TRUE(oracle::close_rel(s.stddev, o.stddev) || std::fabs(s.stddev - o.stddev) < 1e-9 * o.mean) << set;
    ASSERT_TRUE(oracle::close_rel(s.cv, o.cv) || std::fabs(s.cv - o.cv) < 1e-9) << set;
  }
}

TEST(Statistics, MergeOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  std::vector<std::uint64_t> xs(200);
  for (auto& x : xs) x = rng() % 100000;
  Accumulator whole, left, right;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    whole.add(xs[i]);
    (i % 3 ? left : right).add(xs[i]);
  }
  Accumulator lr = left, rl = right;
  lr.merge(right);
  rl.merge(left);
  EXPECT_EQ(lr, whole);
  EXPECT_EQ(rl, whole);
  EXPECT_EQ(finalize(lr), finalize(whole));
}

TEST(Statistics, ConstantValuesHaveZeroSpread) {
  const Stats s = stats_of({7, 7, 7, 7});
  EXPECT_EQ(s.stddev, 0.0);
  EXPECT_EQ(s.cv, 0.0);
  EXPECT_EQ(stats_of({}).cv, 0.0);
}

TEST(Statistics, OverflowingSumIsConfigError) {
  EXPECT_EQ(code_of([] { stats_of({UINT64_MAX, UINT64_MAX}); }), Errc::ConfigError);
}

TEST(Partition, ContiguousWithExtrasFirst) {
  EXPECT_EQ(partition(10, 4), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 6}, {6, 8}, {8, 10}}));
  const auto p = partition(2, 4);
  EXPECT_EQ(p.size(), 4u);
  EXPECT_EQ(p[3].first, p[3].second);
}

TEST(Plan, RejectsZeroWorkers) {
  EXPECT_EQ(code_of([] { AggregationPlan{0, 1}.validate(); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { AggregationPlan{1, 0}.validate(); }), Errc::ConfigError);
}

TEST(SortTrace, StableAndIdleFirst) {
  std::vector<TraceRecord> r{{30, 3}, {10, 1}, {30, 0}, {20, 2}, {10, 4}};
  sort_trace(r);
  EXPECT_EQ(r, (std::vector<TraceRecord>{{10, 1}, {10, 4}, {20, 2}, {30, 0}, {30, 3}}));
}

TEST(FinalizeTrace, FlaggedSortedUnflaggedUntouched) {
  const std::vector<ContextId> map{0, 5, 6, 7};
  const Trace flagged{true, {{5, 1}, {3, 2}, {9, 0}, {4, 3}}};
  const auto f = finalize_trace(ProfileIdTuple::gpu(0, 0, 0, 0), flagged, map);
  EXPECT_TRUE(f.out_of_order);
  EXPECT_TRUE(std::is_sorted(f.records.begin(), f.records.end(),
                             [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp < b.timestamp; }));
  // Unflagged: same order, ids rewritten only.
  const Trace plain{false, {{1, 2}, {4, 1}, {6, 0}}};
  const auto u = finalize_trace(ProfileIdTuple::cpu(0, 0, 0), plain, map);
  EXPECT_EQ(u.records, (std::vector<TraceRecord>{{1, 6}, {4, 5}, {6, 0}}));
  EXPECT_EQ(code_of([&] { finalize_trace(ProfileIdTuple::cpu(0, 0, 0), Trace{false, {{1, 9}}}, map); }),
            Errc::DanglingTraceRef);
}

TEST(Acquire, SkipsCorruptProfiles) {
  oracle::TempDir dir;
  const auto w = oracle::build_database(dir.path(), {.seed = 3});
  formats::write_text(w.measurements + "/cpu-9-9.prof", "garbage");
  const Inputs in = acquire_inputs(w.measurements);
  EXPECT_EQ(in.skipped.size(), 1u);
  EXPECT_TRUE(std::is_sorted(in.profiles.begin(), in.profiles.end(),
                             [](const InputProfile& a, const InputProfile& b) { return a.id < b.id; }));
  for (std::size_t i = 0; i < in.modules.size(); ++i) EXPECT_EQ(in.modules[i].id, i + 1);
  oracle::TempDir empty;
  EXPECT_EQ(code_of([&] { acquire_inputs(empty.str()); }), Errc::EmptyInput);
}

TEST(Aggregate, EquivalentAcrossPlans) {
  oracle::TempDir dir;
  const auto w = oracle::build_database(dir.path() / "base", {.seed = 8, .threads = 3, .streams = 2, .ops = 60});
  const auto ref = oracle::dir_contents(w.db);
  for (AggregationPlan plan : {AggregationPlan{2, 2}, AggregationPlan{4, 3}, AggregationPlan{1, 1, 4096}}) {
    const std::string out = dir.str("db-" + std::to_string(plan.groups) + "-" + std::to_string(plan.threads) +
                                     "-" + std::to_string(plan.memory_budget));
    aggregate(w.measurements, w.input + "/structure", out, plan);
    EXPECT_EQ(oracle::dir_contents(out), ref) << plan.groups << "x" << plan.threads;
  }
}

TEST(Aggregate, ConservesMeasuredTotals) {
  oracle::TempDir dir;
  const auto w = oracle::build_database(dir.path(), {.seed = 12, .threads = 2, .streams = 2, .ops = 50});
  // Measured totals per metric over CPU profiles.
  std::map<MetricId, std::uint64_t> measured;
  for (const auto& e : fs::directory_iterator(w.measurements)) {
    if (e.path().extension() != ".prof") continue;
    const auto p = formats::read_profile(formats::read_file(e.path().string()));
    if (p.id_tuple.is_gpu()) continue;
    for (NodeId n = 0; n < p.cct.size(); ++n)
      for (const auto& [m, v] : p.cct.node(n).metric_values()) measured[m] += v;
  }
  const auto db = analysis::Database::open(w.db);
  for (const auto& [m, total] : measured) {
    const auto& name = metrics::standard()->find(m)->name;
    std::uint64_t excl = 0;
    for (ContextId c = 0; c < db.tree().size(); ++c) {
      // Stream profiles repeat GPU metrics; count CPU profiles only.
      for (const auto& [p, v] : db.cms().scan(c, db.metric(name, false).id))
        if (!db.meta().profiles[p].id.is_gpu()) excl += v;
    }
    EXPECT_EQ(excl, total) << name;
    std::uint64_t root = 0;
    for (const auto& [p, v] : db.cms().scan(0, db.metric(name, true).id))
      if (!db.meta().profiles[p].id.is_gpu()) root += v;
    EXPECT_EQ(root, total) << name;
  }
}

TEST(Aggregate, MissingStructureFallsBackWithWarning) {
  oracle::TempDir dir;
  const auto w = oracle::build_database(dir.path(), {.seed = 3}, {}, false);
  const auto s = aggregate(w.measurements, "", dir.str("db2"), {});
  ASSERT_FALSE(s.warnings.empty());
  EXPECT_NE(s.warnings.front().find("unknown functions"), std::string::npos);
  const auto db = analysis::Database::open(dir.str("db2"));
  bool unknown = false;
  for (ContextId c = 0; c < db.tree().size(); ++c) {
    EXPECT_FALSE(db.tree().node(c).key.is_address());
    unknown = unknown || db.tree().node(c).key.kind == ContextKind::Unknown;
  }
  EXPECT_TRUE(unknown);
}

TEST(Aggregate, OutOfOrderTracesAreSorted) {
  oracle::TempDir dir;
  const auto w = oracle::build_database(dir.path(), {.seed = 2, .ops = 80, .out_of_order = true});
  const auto db = analysis::Database::open(w.db);
  for (const auto& line : db.traces())
    EXPECT_TRUE(std::is_sorted(line.records.begin(), line.records.end(),
                               [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp < b.timestamp; }));
}

TEST(Aggregate, GpuContextsAreReconstructed) {
  oracle::TempDir dir;
  const auto w = oracle::build_database(dir.path(), {.seed = 7});
  const auto db = analysis::Database::open(w.db);
  // Some GPU context nests a device function inside the kernel.
  bool call_site = false;
  for (ContextId c = 0; c < db.tree().size(); ++c) {
    int functions_below_placeholder = -1;
    for (ContextId a : db.tree().path_to(c)) {
      const auto kind = db.tree().node(a).key.kind;
      if (kind == ContextKind::Placeholder) functions_below_placeholder = 0;
      else if (kind == ContextKind::Function && functions_below_placeholder >= 0) ++functions_below_placeholder;
    }
    call_site = call_site || functions_below_placeholder >= 2;
  }
  EXPECT_TRUE(call_site);
  // Instruction-level metrics are conserved through reconstruction.
  std::uint64_t root = 0, excl = 0;
  for (const auto& [p, v] : db.cms().scan(0, db.metric("gpu_inst_samples", true).id)) root += v;
  for (ContextId c = 0; c < db.tree().size(); ++c) excl += db.sum(c, db.metric("gpu_inst_samples", false).id);
  EXPECT_GT(root, 0u);
  EXPECT_EQ(root, excl);
}

TEST(ContextLabel, Kinds) {
  const std::vector<LoadModule> mods{{1, "app"}};
  ContextNode n;
  n.key = {ContextKind::Unknown, 1, 0, 0};
  EXPECT_EQ(context_label(n, mods), "<unknown function> [app]");
  n.key = {ContextKind::Loop, 1, 3, 0};
  n.info = {"main", "app.c", 104, 0, 0};
  EXPECT_EQ(context_label(n, mods), "loop at app.c:104");
  n.key = {ContextKind::Root, 0, 0, 0};
  EXPECT_EQ(context_label(n, mods), "<program root>");
}
