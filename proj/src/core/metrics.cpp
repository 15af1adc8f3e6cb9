#include "gpuprof/core/metrics.hpp"

namespace gpuprof::metrics {

namespace {

std::shared_ptr<const MetricTable> build() {
  auto t = std::make_shared<MetricTable>();
  t->add_kind(kCpuTime, "CPU time");
  t->add_kind(kKernelInfo, "GPU kernel info");
  t->add_kind(kCopyInfo, "GPU copy info");
  t->add_kind(kSyncInfo, "GPU sync info");
  t->add_kind(kMemoryInfo, "GPU memory info");
  t->add_kind(kInstructionStall, "GPU instruction stall");
  t->add_kind(kInstructionCount, "GPU instruction count");

  auto add = [&](MetricId id, const char* name, KindId kind) {
    t->add_metric(MetricDescriptor{id, name, kind, Combine::Sum});
  };
  add(cpu_time, "cpu_time", kCpuTime);
  add(gpu_kernel_time, "gpu_kernel_time", kKernelInfo);
  add(gpu_kernel_count, "gpu_kernel_count", kKernelInfo);
  add(gpu_kernel_reg_sum, "gpu_kernel_reg_sum", kKernelInfo);
  add(gpu_kernel_shmem_sum, "gpu_kernel_shmem_sum", kKernelInfo);
  add(gpu_copy_time, "gpu_copy_time", kCopyInfo);
  add(gpu_copy_count, "gpu_copy_count", kCopyInfo);
  add(gpu_copy_h2d_bytes, "gpu_copy_h2d_bytes", kCopyInfo);
  add(gpu_copy_d2h_bytes, "gpu_copy_d2h_bytes", kCopyInfo);
  add(gpu_sync_time, "gpu_sync_time", kSyncInfo);
  add(gpu_sync_count, "gpu_sync_count", kSyncInfo);
  add(gpu_memset_time, "gpu_memset_time", kMemoryInfo);
  add(gpu_memset_count, "gpu_memset_count", kMemoryInfo);
  add(gpu_memset_bytes, "gpu_memset_bytes", kMemoryInfo);
  add(gpu_alloc_time, "gpu_alloc_time", kMemoryInfo);
  add(gpu_alloc_count, "gpu_alloc_count", kMemoryInfo);
  add(gpu_alloc_bytes, "gpu_alloc_bytes", kMemoryInfo);
  add(gpu_inst_samples, "gpu_inst_samples", kInstructionStall);
  add(gpu_stall_samples, "gpu_stall_samples", kInstructionStall);
  add(stall_metric(StallReason::MemoryDependency), "gpu_stall_mem_dep", kInstructionStall);
  add(stall_metric(StallReason::ExecutionDependency), "gpu_stall_exec_dep", kInstructionStall);
  add(stall_metric(StallReason::NotSelected), "gpu_stall_not_selected", kInstructionStall);
  add(stall_metric(StallReason::InstructionFetch), "gpu_stall_inst_fetch", kInstructionStall);
  add(stall_metric(StallReason::Synchronization), "gpu_stall_sync", kInstructionStall);
  add(stall_metric(StallReason::Other), "gpu_stall_other", kInstructionStall);
  add(gpu_inst_exec, "gpu_inst_exec", kInstructionCount);
  return t;
}

}  // namespace

std::shared_ptr<const MetricTable> standard() {
  static const std::shared_ptr<const MetricTable> table = build();
  return table;
}

}  // namespace gpuprof::metrics
