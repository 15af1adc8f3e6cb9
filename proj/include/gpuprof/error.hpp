#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gpuprof {

enum class Errc {
  UnknownMetric,
  KindMismatch,
  ConfigError,
  OrphanActivity,
  CorruptFile,
  UnknownProfile,
  UnknownContext,
  ParseError,
  NestingViolation,
  UnknownAddress,
  DisconnectedSamples,
  EmptyInput,
  DanglingTraceRef,
  IoError,
  NoGpuLines,
  UnknownFunction,
};

std::string_view errc_name(Errc code);

/// Exception carrying a machine-checkable error code.
///
/// `position` holds a byte offset for binary formats and a 1-based line
/// number for text formats, when one is known.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what,
        std::optional<std::uint64_t> position = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::uint64_t> position() const noexcept { return position_; }

 private:
  Errc code_;
  std::optional<std::uint64_t> position_;
};

}  // namespace gpuprof
