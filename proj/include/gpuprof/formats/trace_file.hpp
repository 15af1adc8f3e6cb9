#pragma once

#include <cstdint>
#include <vector>

#include "gpuprof/core/model.hpp"
#include "gpuprof/formats/bytes.hpp"

namespace gpuprof::formats {

inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderSize = 4 + 2 + 2 + 20 + 8;
inline constexpr std::size_t kTraceRecordSize = 12;

/// Timestamped context ids for one CPU thread or GPU stream. Context ids
/// are profile-local node ids in measurement output and global context ids
/// in a database.
struct TraceFile {
  ProfileIdTuple id;
  bool out_of_order = false;
  std::vector<TraceRecord> records;

  bool operator==(const TraceFile&) const = default;
};

void encode_id_tuple(ByteWriter& w, const ProfileIdTuple& id);
ProfileIdTuple decode_id_tuple(ByteReader& r);

Bytes write_trace(const TraceFile& trace);
/// Throws CorruptFile on bad magic, unknown version, or a record count that
/// does not match the body.
TraceFile read_trace(std::span<const std::uint8_t> bytes);

}  // namespace gpuprof::formats
