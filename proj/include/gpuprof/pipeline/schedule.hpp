#pragma once

// Deterministic logical-clock model of the synthetic GPU runtime. All
// timestamps and activity contents derive from the workload script and
// seed, never from wall time.

#include <cstdint>
#include <vector>

#include "gpuprof/core/activity.hpp"
#include "gpuprof/gpucct/gpubin.hpp"
#include "gpuprof/pipeline/workload.hpp"

namespace gpuprof::pipeline {

struct ScheduledOp {
  std::uint64_t invocation = 0;  // 0 for idle ops; otherwise unique, from 1
  std::uint64_t begin = 0;       // CPU work starts
  std::uint64_t issue = 0;       // operation handed to the runtime
  std::uint64_t start = 0;       // device interval; for sync: waiting interval
  std::uint64_t end = 0;
  std::uint64_t resume = 0;      // CPU clock after the op (after a sync wait)
};

struct Schedule {
  std::vector<std::vector<ScheduledOp>> threads;  // parallel to spec.threads[t].ops
  std::vector<std::uint64_t> thread_end;          // CPU clock after the last op
};

/// Streams execute operations in issue order; operations issued at the
/// same instant are ordered by thread index. Invocation ids follow that
/// order, so they also increase per issuing thread.
Schedule build_schedule(const WorkloadSpec& spec);

/// One activity the runtime will deliver, with its issuing op.
struct Emission {
  std::uint32_t thread = 0;
  std::uint32_t op = 0;
  GpuActivity activity;
};

/// Activities in delivery order: by start time, then invocation, kernel
/// before its instruction batch. With `spec.out_of_order`, every other pair
/// of consecutive traceable activities on a stream is swapped.
std::vector<Emission> plan_activities(const WorkloadSpec& spec, const Schedule& schedule);

/// Seeded PC sampling of one launch: `n` samples over the instructions
/// reachable from `kernel`, weighted by execution count. Aggregated and
/// sorted by (address, stall reason).
SampleBatchPayload draw_samples(const gpucct::GpuBinary& binary, ModuleId module,
                                std::uint32_t kernel, std::uint64_t n, std::uint64_t seed,
                                std::uint64_t invocation);

/// Exact per-instruction execution counts of one launch.
InstrCountsPayload exact_counts(const gpucct::GpuBinary& binary, ModuleId module,
                                std::uint32_t kernel);

}  // namespace gpuprof::pipeline
