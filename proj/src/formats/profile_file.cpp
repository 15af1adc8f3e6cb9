#include "gpuprof/formats/profile_file.hpp"

#include <unordered_set>

#include "gpuprof/core/metrics.hpp"

namespace gpuprof::formats {

namespace {

constexpr std::size_t kCctRecordSize = 4 + 4 + 1 + 1 + 4 + 8;

void put_tag(ByteWriter& w, const char* tag) { w.raw(std::string_view(tag, 4)); }

// Writes a section header with a placeholder length; returns the length slot.
std::size_t begin_section(ByteWriter& w, const char* tag) {
  put_tag(w, tag);
  std::size_t slot = w.size();
  w.u64(0);
  return slot;
}

void end_section(ByteWriter& w, std::size_t slot) {
  w.patch_u64(slot, w.size() - slot - 8);
}

}  // namespace

ProfileFile to_sections(const Profile& profile) {
  ProfileFile f;
  f.id = profile.id_tuple;
  f.load_modules = profile.load_modules;
  std::sort(f.load_modules.begin(), f.load_modules.end(),
            [](const LoadModule& a, const LoadModule& b) { return a.id < b.id; });

  const auto& tree = profile.cct;
  std::vector<NodeId> order = tree.preorder();
  std::vector<NodeId> remap(tree.size(), kNoNode);
  for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<NodeId>(i);

  f.cct.reserve(order.size());
  for (NodeId old : order) {
    const CctNode& n = tree.node(old);
    f.cct.push_back(CctRecord{remap[old], n.parent == kNoNode ? kNoNode : remap[n.parent],
                              n.frame});
    auto vals = n.metric_values();
    if (!vals.empty()) {
      f.cct_metric_values.push_back(CctMetricRange{
          remap[old], f.metric_values.size(), static_cast<std::uint32_t>(vals.size())});
      for (const auto& [m, v] : vals) f.metric_values.push_back(MetricValue{m, v});
    }
  }
  f.kinds = tree.table().kinds();
  f.metrics = tree.table().metrics();

  if (profile.trace) {
    TraceFile t;
    t.id = profile.id_tuple;
    t.out_of_order = profile.trace->out_of_order;
    t.records.reserve(profile.trace->records.size());
    for (const auto& r : profile.trace->records) t.records.push_back({r.timestamp, remap.at(r.cct_node_id)});
    f.trace = std::move(t);
  }
  return f;
}

Profile from_sections(const ProfileFile& f) {
  auto table = std::make_shared<MetricTable>();
  try {
    for (const auto& k : f.kinds) table->add_kind(k.id, k.name);
    for (const auto& m : f.metrics) table->add_metric(m);
  } catch (const Error& e) {
    throw Error(Errc::CorruptFile, std::string("metrics section: ") + e.what(), 0);
  }
  for (const auto& k : f.kinds) {
    const MetricKind* built = table->find_kind(k.id);
    if (!k.members.empty() && built->members != k.members)
      throw Error(Errc::CorruptFile, "metric kind member list mismatch", 0);
  }
  std::shared_ptr<const MetricTable> shared = table;
  if (*table == *metrics::standard()) shared = metrics::standard();

  Profile p(shared);
  p.id_tuple = f.id;
  p.load_modules = f.load_modules;
  if (f.cct.empty() || f.cct[0].id != 0 || f.cct[0].parent != kNoNode ||
      f.cct[0].frame.kind != FrameKind::Root)
    throw Error(Errc::CorruptFile, "CCT section lacks a root record", 0);
  for (std::size_t i = 1; i < f.cct.size(); ++i) {
    const auto& rec = f.cct[i];
    if (rec.id != i || rec.parent >= rec.id)
      throw Error(Errc::CorruptFile, "CCT record " + std::to_string(i) + " out of order", 0);
    if (p.cct.find_child(rec.parent, rec.frame))
      throw Error(Errc::CorruptFile, "duplicate sibling frame in CCT", 0);
    p.cct.child(rec.parent, rec.frame);
  }
  for (const auto& r : f.cct_metric_values) {
    if (r.node >= p.cct.size()) throw Error(Errc::CorruptFile, "metric range for unknown node", 0);
    for (std::uint64_t i = r.start; i < r.start + r.count; ++i) {
      const auto& mv = f.metric_values.at(i);
      try {
        p.cct.add_metric(r.node, mv.metric_id, mv.value);
      } catch (const Error&) {
        throw Error(Errc::CorruptFile, "value for undeclared metric", 0);
      }
    }
  }
  if (f.trace) {
    Trace t;
    t.out_of_order = f.trace->out_of_order;
    t.records = f.trace->records;
    for (const auto& rec : t.records)
      if (rec.cct_node_id >= p.cct.size())
        throw Error(Errc::CorruptFile, "trace references unknown node", 0);
    p.trace = std::move(t);
  }
  return p;
}

Bytes encode_sections(const ProfileFile& f) {
  Bytes out;
  ByteWriter w(out);
  w.raw("GPRF");
  w.u16(kProfileVersion);
  w.u16(f.trace ? 6 : 5);
  encode_id_tuple(w, f.id);

  std::size_t s = begin_section(w, "LMOD");
  w.u32(static_cast<std::uint32_t>(f.load_modules.size()));
  for (const auto& m : f.load_modules) {
    w.u32(m.id);
    w.str16(m.path);
  }
  end_section(w, s);

  s = begin_section(w, "CCT ");
  w.u32(static_cast<std::uint32_t>(f.cct.size()));
  for (const auto& rec : f.cct) {
    w.u32(rec.id);
    w.u32(rec.parent);
    w.u8(static_cast<std::uint8_t>(rec.frame.kind));
    w.u8(static_cast<std::uint8_t>(rec.frame.placeholder));
    w.u32(rec.frame.addr.module_id);
    w.u64(rec.frame.addr.offset);
  }
  end_section(w, s);

  s = begin_section(w, "MDSC");
  w.u16(static_cast<std::uint16_t>(f.kinds.size()));
  for (const auto& k : f.kinds) {
    w.u16(k.id);
    w.str16(k.name);
  }
  w.u16(static_cast<std::uint16_t>(f.metrics.size()));
  for (const auto& m : f.metrics) {
    w.u16(m.id);
    w.u16(m.kind_id);
    w.u8(static_cast<std::uint8_t>(m.combine));
    w.str16(m.name);
  }
  end_section(w, s);

  s = begin_section(w, "MVAL");
  w.u64(f.metric_values.size());
  for (const auto& v : f.metric_values) {
    w.u16(v.metric_id);
    w.u64(v.value);
  }
  end_section(w, s);

  s = begin_section(w, "CMVL");
  w.u32(static_cast<std::uint32_t>(f.cct_metric_values.size()));
  for (const auto& r : f.cct_metric_values) {
    w.u32(r.node);
    w.u64(r.start);
    w.u32(r.count);
  }
  end_section(w, s);

  if (f.trace) {
    s = begin_section(w, "TRCE");
    w.raw(write_trace(*f.trace));
    end_section(w, s);
  }
  return out;
}

namespace {

// Returns a reader limited to the section payload and advances `r` past it.
ByteReader open_section(ByteReader& r, const char* tag) {
  r.need(12);
  std::size_t at = r.pos();
  if (std::memcmp(r.data().data() + at, tag, 4) != 0)
    throw Error(Errc::CorruptFile, std::string("expected section ") + tag, at);
  r.skip(4);
  std::uint64_t len = r.u64();
  if (len > r.remaining()) throw Error(Errc::CorruptFile, std::string("truncated section ") + tag, at);
  ByteReader sec(r.data().subspan(0, r.pos() + len), r.pos());
  r.skip(len);
  return sec;
}

void close_section(const ByteReader& sec, const char* tag) {
  if (sec.remaining() != 0)
    throw Error(Errc::CorruptFile, std::string("trailing bytes in section ") + tag, sec.pos());
}

}  // namespace

ProfileIdTuple peek_profile_id(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("GPRF");
  r.skip(4);
  return decode_id_tuple(r);
}

namespace {

// Header and LMOD section; `r` is left after LMOD.
ProfileFile decode_prefix(ByteReader& r, std::uint16_t& sections) {
  r.expect_magic("GPRF");
  std::size_t vpos = r.pos();
  if (r.u16() != kProfileVersion) throw Error(Errc::CorruptFile, "unsupported profile version", vpos);
  std::size_t cpos = r.pos();
  sections = r.u16();
  if (sections != 5 && sections != 6) throw Error(Errc::CorruptFile, "bad section count", cpos);
  ProfileFile f;
  f.id = decode_id_tuple(r);

  ByteReader sec = open_section(r, "LMOD");
  std::uint32_t n = sec.u32();
  std::unordered_set<ModuleId> ids;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::size_t at = sec.pos();
    LoadModule m;
    m.id = sec.u32();
    m.path = sec.str16();
    if (m.path.empty() || !ids.insert(m.id).second)
      throw Error(Errc::CorruptFile, "bad load module record", at);
    f.load_modules.push_back(std::move(m));
  }
  close_section(sec, "LMOD");
  return f;
}

}  // namespace

ProfileHeader peek_profile_header(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::uint16_t sections = 0;
  ProfileFile f = decode_prefix(r, sections);
  return {f.id, std::move(f.load_modules)};
}

ProfileFile decode_sections(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::uint16_t sections = 0;
  ProfileFile f = decode_prefix(r, sections);
  {
    ByteReader sec = open_section(r, "CCT ");
    std::uint32_t n = sec.u32();
    sec.need(std::size_t(n) * kCctRecordSize);
    f.cct.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::size_t at = sec.pos();
      auto& rec = f.cct[i];
      rec.id = sec.u32();
      rec.parent = sec.u32();
      std::uint8_t kind = sec.u8();
      std::uint8_t ph = sec.u8();
      rec.frame.addr.module_id = sec.u32();
      rec.frame.addr.offset = sec.u64();
      if (kind > static_cast<std::uint8_t>(FrameKind::GpuScc) || ph >= kPlaceholderKindCount)
        throw Error(Errc::CorruptFile, "bad frame kind", at);
      rec.frame.kind = static_cast<FrameKind>(kind);
      rec.frame.placeholder = static_cast<PlaceholderKind>(ph);
      if (rec.id != i || (i == 0 ? rec.parent != kNoNode : rec.parent >= rec.id))
        throw Error(Errc::CorruptFile, "CCT records out of order", at);
    }
    close_section(sec, "CCT ");
  }
  {
    ByteReader sec = open_section(r, "MDSC");
    std::uint16_t nk = sec.u16();
    for (std::uint16_t i = 0; i < nk; ++i) {
      MetricKind k;
      k.id = sec.u16();
      k.name = sec.str16();
      f.kinds.push_back(std::move(k));
    }
    std::uint16_t nm = sec.u16();
    for (std::uint16_t i = 0; i < nm; ++i) {
      std::size_t at = sec.pos();
      MetricDescriptor d;
      d.id = sec.u16();
      d.kind_id = sec.u16();
      std::uint8_t c = sec.u8();
      if (c > 2) throw Error(Errc::CorruptFile, "bad combine operator", at);
      d.combine = static_cast<Combine>(c);
      d.name = sec.str16();
      bool known_kind = false;
      for (auto& k : f.kinds)
        if (k.id == d.kind_id) {
          k.members.push_back(d.id);
          known_kind = true;
        }
      if (!known_kind) throw Error(Errc::CorruptFile, "metric in unknown kind", at);
      f.metrics.push_back(std::move(d));
    }
    close_section(sec, "MDSC");
  }
  std::unordered_set<MetricId> metric_ids;
  for (const auto& d : f.metrics) metric_ids.insert(d.id);
  {
    ByteReader sec = open_section(r, "MVAL");
    std::size_t at = sec.pos();
    std::uint64_t n = sec.u64();
    if (n > sec.remaining() / 10) throw Error(Errc::CorruptFile, "truncated metric values", at);
    f.metric_values.resize(n);
    for (auto& v : f.metric_values) {
      at = sec.pos();
      v.metric_id = sec.u16();
      v.value = sec.u64();
      if (v.value == 0) throw Error(Errc::CorruptFile, "stored zero metric value", at);
      if (!metric_ids.count(v.metric_id)) throw Error(Errc::CorruptFile, "value for undeclared metric", at);
    }
    close_section(sec, "MVAL");
  }
  {
    ByteReader sec = open_section(r, "CMVL");
    std::uint32_t n = sec.u32();
    std::uint64_t next_start = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      std::size_t at = sec.pos();
      CctMetricRange cr;
      cr.node = sec.u32();
      cr.start = sec.u64();
      cr.count = sec.u32();
      if (cr.node >= f.cct.size()) throw Error(Errc::CorruptFile, "metric range for unknown node", at);
      if (!f.cct_metric_values.empty() && cr.node <= f.cct_metric_values.back().node)
        throw Error(Errc::CorruptFile, "metric ranges not ascending by node", at);
      if (cr.start < next_start) throw Error(Errc::CorruptFile, "metric range overlap", at);
      if (cr.count == 0 || cr.start + cr.count > f.metric_values.size())
        throw Error(Errc::CorruptFile, "metric range outside values", at);
      next_start = cr.start + cr.count;
      f.cct_metric_values.push_back(cr);
    }
    close_section(sec, "CMVL");
  }
  if (sections == 6) {
    std::size_t at = r.pos();
    ByteReader sec = open_section(r, "TRCE");
    try {
      f.trace = read_trace(sec.data().subspan(sec.pos()));
    } catch (const Error& e) {
      throw Error(Errc::CorruptFile, std::string("trace section: ") + e.what(), at);
    }
    for (const auto& rec : f.trace->records)
      if (rec.cct_node_id >= f.cct.size())
        throw Error(Errc::CorruptFile, "trace references unknown node", at);
  }
  if (r.remaining() != 0) throw Error(Errc::CorruptFile, "trailing bytes", r.pos());
  return f;
}

}  // namespace gpuprof::formats
