#pragma once

// Workload scripts driving the synthetic measurement pipeline. The text
// form is documented in docs/WORKLOAD.md.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpuprof/core/model.hpp"
#include "gpuprof/gpucct/gpubin.hpp"

namespace gpuprof::pipeline {

enum class SamplingMode : std::uint8_t { None, PcSampling, Instrumentation };

enum class OpKind : std::uint8_t { Kernel, CopyH2D, CopyD2H, Sync, MemSet, MemAlloc, Idle };

struct ModuleSpec {
  ModuleId id = 0;
  std::string name;
  bool gpu = false;
  /// Path of the .gpubin description relative to the spec file (GPU only).
  std::string binary_path;
  std::optional<gpucct::GpuBinary> binary;
};

struct KernelSpec {
  std::string name;
  ModuleId module = 0;
  std::uint32_t regs = 0;
  std::uint32_t shmem = 0;
  /// PC samples drawn per launch in sampling mode.
  std::uint64_t samples = 0;
};

struct OpSpec {
  OpKind kind = OpKind::Kernel;
  std::string kernel;          // Kernel
  std::uint32_t stream = 0;    // all but Idle
  std::uint64_t cpu_ns = 0;    // CPU work before issuing; Idle: idle time
  std::uint64_t dur_ns = 0;    // device time of async operations
  std::uint64_t bytes = 0;     // copies, memset, alloc
  std::vector<FrameAddr> path; // CPU call path, outermost first
};

struct ThreadSpec {
  std::vector<OpSpec> ops;
};

struct WorkloadSpec {
  std::uint64_t seed = 0;
  std::uint32_t node = 0;
  std::uint32_t rank = 0;
  std::uint32_t devices = 1;
  std::uint32_t streams = 1;
  SamplingMode sampling = SamplingMode::None;
  bool tracing = true;
  /// 0 selects max(1, streams / 8).
  std::uint32_t tracing_threads = 0;
  std::uint32_t batch = 256;
  std::uint32_t queue_capacity = 4096;
  /// Emit some adjacent same-stream activities in swapped order.
  bool out_of_order = false;
  std::vector<ModuleSpec> modules;
  std::vector<KernelSpec> kernels;
  std::vector<ThreadSpec> threads;

  const ModuleSpec* find_module(ModuleId id) const;
  const KernelSpec* find_kernel(std::string_view name) const;
  std::uint32_t effective_tracing_threads() const;
  std::uint64_t op_count() const;

  /// Throws ConfigError on dangling references or out-of-range values.
  void validate() const;
};

/// Parses a spec; GPU module binaries are loaded relative to `base_dir`
/// unless `load_binaries` is false. Throws ConfigError (with line number).
WorkloadSpec parse_workload(std::string_view text, const std::string& base_dir,
                            bool load_binaries = true);
WorkloadSpec load_workload(const std::string& path);
std::string write_workload(const WorkloadSpec& spec);

const char* op_kind_name(OpKind k);
const char* sampling_name(SamplingMode m);

}  // namespace gpuprof::pipeline
