#include <gtest/gtest.h>

#include "gpuprof/core/activity.hpp"
#include "gpuprof/core/context.hpp"
#include "gpuprof/core/metrics.hpp"
#include "gpuprof/error.hpp"

using namespace gpuprof;

namespace {

Frame cpu(ModuleId m, std::uint64_t off) { return Frame::cpu({m, off}); }

}  // namespace

TEST(CallingContextTree, SharesCommonPrefixes) {
  CallingContextTree t(metrics::standard());
  const NodeId a = t.insert_call_path({cpu(1, 10), cpu(1, 20)});
  const NodeId b = t.insert_call_path({cpu(1, 10), cpu(1, 30)});
  EXPECT_NE(a, b);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(t.node(a).parent, t.node(b).parent);
  EXPECT_EQ(t.insert_call_path({cpu(1, 10), cpu(1, 20)}), a);
  EXPECT_EQ(t.path_to(b), (std::vector<Frame>{cpu(1, 10), cpu(1, 30)}));
  t.check_invariants();
}

TEST(CallingContextTree, ZeroIsAbsence) {
  CallingContextTree t(metrics::standard());
  const NodeId n = t.insert_call_path({cpu(1, 10)});
  t.add_metric(n, metrics::cpu_time, 5);
  EXPECT_EQ(t.metric(n, metrics::cpu_time), 5u);
  EXPECT_EQ(t.node(n).metric_count(), 1u);
  t.add_metric(n, metrics::gpu_kernel_time, 0);
  EXPECT_EQ(t.node(n).metric_count(), 1u);
  EXPECT_EQ(t.node(n).metrics.size(), 1u);
  t.check_invariants();
}

TEST(CallingContextTree, UnknownMetricThrows) {
  CallingContextTree t(metrics::standard());
  try {
    t.add_metric(0, 999, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownMetric);
  }
}

TEST(CallingContextTree, PreorderFollowsFrameOrder) {
  CallingContextTree t(metrics::standard());
  t.insert_call_path({cpu(1, 30)});
  t.insert_call_path({cpu(1, 10), cpu(2, 5)});
  t.insert_call_path({cpu(1, 20)});
  std::vector<std::uint64_t> offsets;
  for (NodeId id : t.preorder())
    if (id != 0) offsets.push_back(t.node(id).frame.addr.offset);
  EXPECT_EQ(offsets, (std::vector<std::uint64_t>{10, 5, 20, 30}));
}

TEST(CallingContextTree, PruneCompactsIds) {
  CallingContextTree t(metrics::standard());
  const NodeId ph = t.insert_call_path({cpu(1, 10), Frame::make_placeholder(PlaceholderKind::KernelLaunch, {2, 0})});
  t.insert_call_path({cpu(1, 10), Frame::make_placeholder(PlaceholderKind::KernelLaunch, {2, 0}),
                      Frame::gpu_instruction({2, 16})});
  const NodeId keep = t.insert_call_path({cpu(1, 20)});
  auto remap = t.prune_children(ph, [](const Frame& f) { return f.kind == FrameKind::GpuInstruction; });
  EXPECT_EQ(t.size(), 4u);
  EXPECT_NE(remap[keep], kNoNode);
  EXPECT_TRUE(t.node(remap[ph]).children.empty());
  t.check_invariants();
}

TEST(MetricTable, RejectsDuplicates) {
  MetricTable t;
  t.add_kind(0, "time");
  t.add_metric({0, "a", 0, Combine::Sum});
  EXPECT_THROW(t.add_metric({0, "b", 0, Combine::Sum}), Error);
  EXPECT_THROW(t.add_metric({1, "a", 0, Combine::Sum}), Error);
  EXPECT_THROW(t.add_metric({2, "c", 7, Combine::Sum}), Error);
  EXPECT_THROW(t.add_kind(0, "again"), Error);
  ASSERT_NE(t.find("a"), nullptr);
  EXPECT_EQ(t.find_kind(0)->members, std::vector<MetricId>{0});
}

TEST(StandardMetrics, NamesAndKinds) {
  const auto& t = *metrics::standard();
  EXPECT_EQ(t.find("gpu_kernel_time")->id, metrics::gpu_kernel_time);
  EXPECT_EQ(t.find("gpu_stall_mem_dep")->id, metrics::stall_metric(StallReason::MemoryDependency));
  EXPECT_EQ(t.find(metrics::gpu_inst_exec)->kind_id, metrics::kInstructionCount);
  EXPECT_EQ(t.metrics().size(), 26u);
}

TEST(Activity, KernelAttribution) {
  CallingContextTree t(metrics::standard());
  const NodeId ph = t.insert_call_path({cpu(1, 10), Frame::make_placeholder(PlaceholderKind::KernelLaunch, {2, 0})});
  GpuActivity a{1, 0, 100, 150, KernelPayload{32, 1024}};
  attribute_activity(t, ph, a);
  attribute_activity(t, ph, a);
  EXPECT_EQ(t.metric(ph, metrics::gpu_kernel_time), 100u);
  EXPECT_EQ(t.metric(ph, metrics::gpu_kernel_count), 2u);
  EXPECT_EQ(t.metric(ph, metrics::gpu_kernel_reg_sum), 64u);
  EXPECT_EQ(t.metric(ph, metrics::gpu_kernel_shmem_sum), 2048u);
}

TEST(Activity, CopyDirections) {
  CallingContextTree t(metrics::standard());
  const NodeId h2d = t.insert_call_path({Frame::make_placeholder(PlaceholderKind::CopyHostToDevice)});
  attribute_activity(t, h2d, {1, 0, 0, 10, CopyPayload{4096, CopyDirection::HostToDevice}});
  EXPECT_EQ(t.metric(h2d, metrics::gpu_copy_h2d_bytes), 4096u);
  EXPECT_EQ(t.metric(h2d, metrics::gpu_copy_d2h_bytes), 0u);
  try {
    attribute_activity(t, h2d, {2, 0, 0, 10, CopyPayload{1, CopyDirection::DeviceToHost}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::KindMismatch);
  }
}

TEST(Activity, SamplesBecomeInstructionChildren) {
  CallingContextTree t(metrics::standard());
  const NodeId ph = t.insert_call_path({Frame::make_placeholder(PlaceholderKind::KernelLaunch, {2, 0})});
  SampleBatchPayload batch{{{{2, 16}, StallReason::None, 3}, {{2, 16}, StallReason::MemoryDependency, 2},
                            {{2, 32}, StallReason::Synchronization, 1}}};
  attribute_activity(t, ph, {1, 0, 0, 0, batch});
  const auto i16 = t.find_child(ph, Frame::gpu_instruction({2, 16}));
  ASSERT_TRUE(i16);
  EXPECT_EQ(t.metric(*i16, metrics::gpu_inst_samples), 5u);
  EXPECT_EQ(t.metric(*i16, metrics::gpu_stall_samples), 2u);
  EXPECT_EQ(t.metric(*i16, metrics::stall_metric(StallReason::MemoryDependency)), 2u);
  EXPECT_EQ(t.node(ph).children.size(), 2u);
}

TEST(Activity, NonPlaceholderRejected) {
  CallingContextTree t(metrics::standard());
  const NodeId n = t.insert_call_path({cpu(1, 10)});
  EXPECT_THROW(attribute_activity(t, n, {1, 0, 0, 1, SyncPayload{}}), Error);
}

TEST(ContextTree, MergeIsUnionAndCanonical) {
  ContextTree a, b;
  const ContextKey f1{ContextKind::Function, 1, 1, 0}, f2{ContextKind::Function, 1, 2, 0};
  const ContextKey l{ContextKind::Line, 1, 7, 0};
  a.child(a.child(0, f2), l);
  b.child(0, f1);
  b.child(b.child(0, f2), l);
  ContextTree ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  EXPECT_EQ(ab.size(), 4u);
  ab.canonicalize();
  ba.canonicalize();
  EXPECT_TRUE(ab == ba);
  EXPECT_EQ(ab.node(1).key, f1);
  EXPECT_EQ(ab.path_to(3), (std::vector<ContextId>{2, 3}));
}

TEST(ContextKind, NamesRoundTrip) {
  for (int k = 0; k <= static_cast<int>(ContextKind::GpuCallAddr); ++k) {
    const auto kind = static_cast<ContextKind>(k);
    EXPECT_EQ(context_kind_from_name(context_kind_name(kind)), kind);
  }
  EXPECT_THROW(context_kind_from_name("bogus"), Error);
}

TEST(ProfileIdTuple, FileNames) {
  EXPECT_EQ(ProfileIdTuple::cpu(0, 2, 3).file_name(), "cpu-2-3.prof");
  EXPECT_EQ(ProfileIdTuple::gpu(0, 1, 0, 4).file_name(), "stream-1-0-4.prof");
  EXPECT_LT(ProfileIdTuple::cpu(0, 0, 9), ProfileIdTuple::gpu(0, 0, 0, 0));
}
