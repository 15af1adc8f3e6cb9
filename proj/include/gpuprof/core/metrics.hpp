#pragma once

#include <memory>

#include "gpuprof/core/model.hpp"

namespace gpuprof::metrics {

// Metric kinds.
inline constexpr KindId kCpuTime = 0;
inline constexpr KindId kKernelInfo = 1;
inline constexpr KindId kCopyInfo = 2;
inline constexpr KindId kSyncInfo = 3;
inline constexpr KindId kMemoryInfo = 4;
inline constexpr KindId kInstructionStall = 5;
inline constexpr KindId kInstructionCount = 6;

// Metric ids of the standard table. All are Sum-combined, in ns, bytes or
// counts.
inline constexpr MetricId cpu_time = 0;
inline constexpr MetricId gpu_kernel_time = 1;
inline constexpr MetricId gpu_kernel_count = 2;
inline constexpr MetricId gpu_kernel_reg_sum = 3;
inline constexpr MetricId gpu_kernel_shmem_sum = 4;
inline constexpr MetricId gpu_copy_time = 5;
inline constexpr MetricId gpu_copy_count = 6;
inline constexpr MetricId gpu_copy_h2d_bytes = 7;
inline constexpr MetricId gpu_copy_d2h_bytes = 8;
inline constexpr MetricId gpu_sync_time = 9;
inline constexpr MetricId gpu_sync_count = 10;
inline constexpr MetricId gpu_memset_time = 11;
inline constexpr MetricId gpu_memset_count = 12;
inline constexpr MetricId gpu_memset_bytes = 13;
inline constexpr MetricId gpu_alloc_time = 14;
inline constexpr MetricId gpu_alloc_count = 15;
inline constexpr MetricId gpu_alloc_bytes = 16;
inline constexpr MetricId gpu_inst_samples = 17;
inline constexpr MetricId gpu_stall_samples = 18;
/// Per-reason stall metric ids start here, in StallReason order (skipping
/// StallReason::None).
inline constexpr MetricId gpu_stall_first = 19;
inline constexpr MetricId gpu_inst_exec = 25;

inline constexpr MetricId stall_metric(StallReason r) {
  return static_cast<MetricId>(gpu_stall_first + static_cast<int>(r) - 1);
}

/// Metrics counting one GPU operation invocation each.
inline constexpr MetricId kInvocationCounters[] = {
    gpu_kernel_count, gpu_copy_count, gpu_sync_count, gpu_memset_count,
    gpu_alloc_count};

/// The table every measured profile carries.
std::shared_ptr<const MetricTable> standard();

}  // namespace gpuprof::metrics
