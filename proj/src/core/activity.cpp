#include "gpuprof/core/activity.hpp"

#include "gpuprof/core/metrics.hpp"
#include "gpuprof/error.hpp"

namespace gpuprof {

bool payload_matches(const ActivityPayload& payload, PlaceholderKind kind) {
  return std::visit(
      [kind](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, KernelPayload> ||
                      std::is_same_v<T, SampleBatchPayload> ||
                      std::is_same_v<T, InstrCountsPayload>) {
          return kind == PlaceholderKind::KernelLaunch;
        } else if constexpr (std::is_same_v<T, CopyPayload>) {
          return p.direction == CopyDirection::HostToDevice
                     ? kind == PlaceholderKind::CopyHostToDevice
                     : kind == PlaceholderKind::CopyDeviceToHost;
        } else if constexpr (std::is_same_v<T, SyncPayload>) {
          return kind == PlaceholderKind::Sync;
        } else if constexpr (std::is_same_v<T, MemSetPayload>) {
          return kind == PlaceholderKind::MemSet;
        } else {
          return kind == PlaceholderKind::MemAlloc;
        }
      },
      payload);
}

void attribute_activity(CallingContextTree& tree, NodeId placeholder,
                        const GpuActivity& activity) {
  const Frame& frame = tree.node(placeholder).frame;
  if (!frame.is_placeholder())
    throw Error(Errc::KindMismatch, "node " + std::to_string(placeholder) +
                                        " is not a placeholder");
  if (!payload_matches(activity.payload, frame.placeholder))
    throw Error(Errc::KindMismatch,
                std::string("activity payload does not fit placeholder ") +
                    placeholder_name(frame.placeholder));

  namespace m = metrics;
  const std::uint64_t dur = activity.duration();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, KernelPayload>) {
          tree.add_metric(placeholder, m::gpu_kernel_time, dur);
          tree.add_metric(placeholder, m::gpu_kernel_count, 1);
          tree.add_metric(placeholder, m::gpu_kernel_reg_sum, p.reg_count);
          tree.add_metric(placeholder, m::gpu_kernel_shmem_sum, p.shmem_bytes);
        } else if constexpr (std::is_same_v<T, CopyPayload>) {
          tree.add_metric(placeholder, m::gpu_copy_time, dur);
          tree.add_metric(placeholder, m::gpu_copy_count, 1);
          tree.add_metric(placeholder,
                          p.direction == CopyDirection::HostToDevice
                              ? m::gpu_copy_h2d_bytes
                              : m::gpu_copy_d2h_bytes,
                          p.bytes);
        } else if constexpr (std::is_same_v<T, SyncPayload>) {
          tree.add_metric(placeholder, m::gpu_sync_time, dur);
          tree.add_metric(placeholder, m::gpu_sync_count, 1);
        } else if constexpr (std::is_same_v<T, MemSetPayload>) {
          tree.add_metric(placeholder, m::gpu_memset_time, dur);
          tree.add_metric(placeholder, m::gpu_memset_count, 1);
          tree.add_metric(placeholder, m::gpu_memset_bytes, p.bytes);
        } else if constexpr (std::is_same_v<T, MemAllocPayload>) {
          tree.add_metric(placeholder, m::gpu_alloc_time, dur);
          tree.add_metric(placeholder, m::gpu_alloc_count, 1);
          tree.add_metric(placeholder, m::gpu_alloc_bytes, p.bytes);
        } else if constexpr (std::is_same_v<T, SampleBatchPayload>) {
          for (const auto& s : p.samples) {
            NodeId n = tree.child(placeholder, Frame::gpu_instruction(s.addr));
            tree.add_metric(n, m::gpu_inst_samples, s.count);
            if (s.stall != StallReason::None) {
              tree.add_metric(n, m::gpu_stall_samples, s.count);
              tree.add_metric(n, m::stall_metric(s.stall), s.count);
            }
          }
        } else {
          for (const auto& c : p.counts) {
            NodeId n = tree.child(placeholder, Frame::gpu_instruction(c.addr));
            tree.add_metric(n, m::gpu_inst_exec, c.count);
          }
        }
      },
      activity.payload);
}

}  // namespace gpuprof
