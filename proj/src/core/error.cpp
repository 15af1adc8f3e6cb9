#include "gpuprof/error.hpp"

namespace gpuprof {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::UnknownMetric: return "UnknownMetric";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::OrphanActivity: return "OrphanActivity";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::UnknownProfile: return "UnknownProfile";
    case Errc::UnknownContext: return "UnknownContext";
    case Errc::ParseError: return "ParseError";
    case Errc::NestingViolation: return "NestingViolation";
    case Errc::UnknownAddress: return "UnknownAddress";
    case Errc::DisconnectedSamples: return "DisconnectedSamples";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DanglingTraceRef: return "DanglingTraceRef";
    case Errc::IoError: return "IoError";
    case Errc::NoGpuLines: return "NoGpuLines";
    case Errc::UnknownFunction: return "UnknownFunction";
  }
  return "Unknown";
}

static std::string decorate(Errc code, const std::string& what,
                            std::optional<std::uint64_t> position) {
  std::string s(errc_name(code));
  s += ": ";
  s += what;
  if (position) {
    s += " (at ";
    s += std::to_string(*position);
    s += ")";
  }
  return s;
}

Error::Error(Errc code, const std::string& what,
             std::optional<std::uint64_t> position)
    : std::runtime_error(decorate(code, what, position)),
      code_(code),
      position_(position) {}

}  // namespace gpuprof
