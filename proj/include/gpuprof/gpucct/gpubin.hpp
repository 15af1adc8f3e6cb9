#pragma once

// Synthetic GPU binary descriptions (.gpubin): functions, their
// instructions grouped in basic blocks, and call instructions.

#include <cstdint>
#include <optional>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include "gpuprof/core/model.hpp"

namespace gpuprof::gpucct {

struct GpuInstruction {
  std::uint64_t offset = 0;
  /// Executions per launch of the owning kernel (the basic block's count).
  std::uint64_t exec_count = 0;
  /// Share of samples at this instruction that report `stall`, in percent.
  std::uint32_t stall_pct = 0;
  StallReason stall = StallReason::None;
  /// Callee function index for call instructions.
  std::optional<std::uint32_t> callee;

  bool operator==(const GpuInstruction&) const = default;
};

struct GpuFunction {
  std::string name;
  std::uint64_t entry = 0;
  bool kernel = false;
  std::vector<GpuInstruction> instructions;  // ascending offsets

  bool operator==(const GpuFunction&) const = default;
};

struct CallSite {
  std::uint64_t site = 0;
  std::uint32_t caller = 0;
  std::uint32_t callee = 0;
};

class GpuBinary {
 public:
  GpuBinary() = default;
  /// Validates unique addresses, defined callees and entry placement;
  /// throws ParseError.
  GpuBinary(std::string module, std::vector<GpuFunction> functions);

  const std::string& module() const { return module_; }
  const std::vector<GpuFunction>& functions() const { return functions_; }
  /// Call sites ascending by address.
  const std::vector<CallSite>& call_sites() const { return call_sites_; }

  std::optional<std::uint32_t> function_by_name(std::string_view name) const;
  std::optional<std::uint32_t> function_by_entry(std::uint64_t entry) const;
  /// (function index, instruction index) owning `offset`.
  std::optional<std::pair<std::uint32_t, std::uint32_t>> locate(std::uint64_t offset) const;
  /// Functions reachable from `root` through call sites, ascending.
  std::vector<std::uint32_t> reachable(std::uint32_t root) const;

  bool operator==(const GpuBinary& o) const {
    return module_ == o.module_ && functions_ == o.functions_;
  }

 private:
  std::string module_;
  std::vector<GpuFunction> functions_;
  std::vector<CallSite> call_sites_;
  // (offset, function, instruction) ascending by offset.
  std::vector<std::tuple<std::uint64_t, std::uint32_t, std::uint32_t>> by_offset_;
};

/// Throws ParseError with a 1-based line number.
GpuBinary parse_gpubin(std::string_view text);
std::string write_gpubin(const GpuBinary& bin);

/// Stall reason names used in text formats: none, mem_dep, exec_dep,
/// not_selected, inst_fetch, sync, other.
const char* stall_name(StallReason r);
std::optional<StallReason> stall_from_name(std::string_view s);

}  // namespace gpuprof::gpucct
