#pragma once

// GPU activities as delivered by a measurement substrate, and their
// attribution below placeholder nodes.

#include <cstdint>
#include <variant>
#include <vector>

#include "gpuprof/core/model.hpp"

namespace gpuprof {

struct KernelPayload {
  std::uint32_t reg_count = 0;
  std::uint32_t shmem_bytes = 0;
  bool operator==(const KernelPayload&) const = default;
};

enum class CopyDirection : std::uint8_t { HostToDevice = 0, DeviceToHost = 1 };

struct CopyPayload {
  std::uint64_t bytes = 0;
  CopyDirection direction = CopyDirection::HostToDevice;
  bool operator==(const CopyPayload&) const = default;
};

struct SyncPayload {
  bool operator==(const SyncPayload&) const = default;
};

struct MemSetPayload {
  std::uint64_t bytes = 0;
  bool operator==(const MemSetPayload&) const = default;
};

struct MemAllocPayload {
  std::uint64_t bytes = 0;
  bool operator==(const MemAllocPayload&) const = default;
};

struct PcSample {
  FrameAddr addr;
  StallReason stall = StallReason::None;
  std::uint64_t count = 0;
  bool operator==(const PcSample&) const = default;
};

struct SampleBatchPayload {
  std::vector<PcSample> samples;
  bool operator==(const SampleBatchPayload&) const = default;
};

struct InstrCount {
  FrameAddr addr;
  std::uint64_t count = 0;
  bool operator==(const InstrCount&) const = default;
};

struct InstrCountsPayload {
  std::vector<InstrCount> counts;
  bool operator==(const InstrCountsPayload&) const = default;
};

using ActivityPayload =
    std::variant<KernelPayload, CopyPayload, SyncPayload, MemSetPayload,
                 MemAllocPayload, SampleBatchPayload, InstrCountsPayload>;

struct GpuActivity {
  std::uint64_t invocation_id = 0;
  std::uint32_t stream_id = 0;
  std::uint64_t start_ts = 0;  // ns
  std::uint64_t end_ts = 0;    // ns
  ActivityPayload payload;

  std::uint64_t duration() const { return end_ts - start_ts; }
  /// Kernel, copy, sync, memset and alloc activities appear in stream traces;
  /// instruction-level batches do not.
  bool traceable() const {
    return !std::holds_alternative<SampleBatchPayload>(payload) &&
           !std::holds_alternative<InstrCountsPayload>(payload);
  }

  bool operator==(const GpuActivity&) const = default;
};

/// Whether `payload` may be attributed below a placeholder of kind `kind`.
bool payload_matches(const ActivityPayload& payload, PlaceholderKind kind);

/// Raw-sum attribution of one activity below a placeholder node. Instruction
/// batches create one GpuInstruction child per distinct address.
/// Throws KindMismatch if the node is not a placeholder or the payload does
/// not fit its kind.
void attribute_activity(CallingContextTree& tree, NodeId placeholder,
                        const GpuActivity& activity);

}  // namespace gpuprof
