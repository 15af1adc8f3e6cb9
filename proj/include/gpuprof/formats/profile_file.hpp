#pragma once

// Per-thread / per-stream sparse profile file.
//
// Sections, in order: LoadModules, CCT, Metrics, MetricValues,
// CctMetricValues, and an optional Trace. A node's CctMetricValues entry
// (start I, count N) names MetricValues positions I..I+N-1. Only non-zero
// values are stored. FORMATS.md has the byte layout.

#include <cstdint>
#include <optional>
#include <vector>

#include "gpuprof/core/model.hpp"
#include "gpuprof/formats/bytes.hpp"
#include "gpuprof/formats/trace_file.hpp"

namespace gpuprof::formats {

inline constexpr std::uint16_t kProfileVersion = 1;

struct CctRecord {
  NodeId id = 0;
  NodeId parent = kNoNode;
  Frame frame;
  bool operator==(const CctRecord&) const = default;
};

struct MetricValue {
  MetricId metric_id = 0;
  std::uint64_t value = 0;
  bool operator==(const MetricValue&) const = default;
};

struct CctMetricRange {
  NodeId node = 0;
  std::uint64_t start = 0;
  std::uint32_t count = 0;
  bool operator==(const CctMetricRange&) const = default;
};

/// Section-level view of a profile file.
struct ProfileFile {
  ProfileIdTuple id;
  std::vector<LoadModule> load_modules;
  std::vector<CctRecord> cct;
  std::vector<MetricKind> kinds;
  std::vector<MetricDescriptor> metrics;
  std::vector<MetricValue> metric_values;
  std::vector<CctMetricRange> cct_metric_values;
  std::optional<TraceFile> trace;

  bool operator==(const ProfileFile&) const = default;
};

/// Canonicalizes node numbering (preorder, children in frame order) so that
/// logically equal profiles encode identically.
ProfileFile to_sections(const Profile& profile);
/// Throws CorruptFile (with byte offset 0) when sections are inconsistent.
Profile from_sections(const ProfileFile& file);

Bytes encode_sections(const ProfileFile& file);
/// Throws CorruptFile with the byte offset of the first problem: bad magic,
/// truncated section, overlapping or unordered ranges, zero values, unknown
/// ids.
ProfileFile decode_sections(std::span<const std::uint8_t> bytes);

inline Bytes write_profile(const Profile& p) { return encode_sections(to_sections(p)); }
inline Profile read_profile(std::span<const std::uint8_t> bytes) {
  return from_sections(decode_sections(bytes));
}

/// Reads only the header's id tuple.
ProfileIdTuple peek_profile_id(std::span<const std::uint8_t> bytes);

struct ProfileHeader {
  ProfileIdTuple id;
  std::vector<LoadModule> load_modules;
};
/// Reads only the header and the load-module section.
ProfileHeader peek_profile_header(std::span<const std::uint8_t> bytes);

}  // namespace gpuprof::formats
