#include "gpuprof/formats/trace_file.hpp"

namespace gpuprof::formats {

void encode_id_tuple(ByteWriter& w, const ProfileIdTuple& id) {
  w.u32(id.node);
  w.u32(id.rank);
  w.u8(static_cast<std::uint8_t>(id.kind));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  if (id.kind == ProfileIdTuple::Kind::CpuThread) {
    w.u32(id.thread_id);
    w.u32(0);
  } else {
    w.u32(id.device_id);
    w.u32(id.stream_id);
  }
}

ProfileIdTuple decode_id_tuple(ByteReader& r) {
  ProfileIdTuple id;
  id.node = r.u32();
  id.rank = r.u32();
  std::size_t kind_pos = r.pos();
  std::uint8_t kind = r.u8();
  r.skip(3);
  std::uint32_t a = r.u32();
  std::uint32_t b = r.u32();
  if (kind == 0) {
    id.kind = ProfileIdTuple::Kind::CpuThread;
    id.thread_id = a;
  } else if (kind == 1) {
    id.kind = ProfileIdTuple::Kind::GpuStream;
    id.device_id = a;
    id.stream_id = b;
  } else {
    throw Error(Errc::CorruptFile, "unknown profile kind", kind_pos);
  }
  return id;
}

Bytes write_trace(const TraceFile& trace) {
  Bytes out;
  out.reserve(kTraceHeaderSize + trace.records.size() * kTraceRecordSize);
  ByteWriter w(out);
  w.raw("GTRC");
  w.u16(kTraceVersion);
  w.u16(trace.out_of_order ? 1 : 0);
  encode_id_tuple(w, trace.id);
  w.u64(trace.records.size());
  for (const auto& rec : trace.records) {
    w.u64(rec.timestamp);
    w.u32(rec.cct_node_id);
  }
  return out;
}

TraceFile read_trace(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("GTRC");
  std::size_t vpos = r.pos();
  if (r.u16() != kTraceVersion) throw Error(Errc::CorruptFile, "unsupported trace version", vpos);
  TraceFile t;
  t.out_of_order = (r.u16() & 1) != 0;
  t.id = decode_id_tuple(r);
  std::size_t cpos = r.pos();
  std::uint64_t n = r.u64();
  if (r.remaining() != n * kTraceRecordSize)
    throw Error(Errc::CorruptFile, "record count does not match body", cpos);
  t.records.resize(n);
  for (auto& rec : t.records) {
    rec.timestamp = r.u64();
    rec.cct_node_id = r.u32();
  }
  return t;
}

}  // namespace gpuprof::formats
