#include "gpuprof/formats/sparse_db.hpp"

#include <stdexcept>

namespace gpuprof::formats {

namespace {

// lower_bound over `n` keys fetched by `key(i)`, counting comparisons.
template <typename Key, typename Fetch>
std::size_t counted_lower_bound(std::size_t n, Key target, Fetch key, SearchStats* stats) {
  std::size_t lo = 0, len = n;
  while (len > 0) {
    std::size_t half = len / 2;
    if (stats) ++stats->comparisons;
    if (key(lo + half) < target) {
      lo += half + 1;
      len -= half + 1;
    } else {
      len = half;
    }
  }
  return lo;
}

void write_header(ByteWriter& w, const char* magic, std::uint32_t a, std::uint32_t b,
                  std::uint32_t c) {
  w.raw(std::string_view(magic, 4));
  w.u16(kSparseVersion);
  w.u16(0);
  w.u32(a);
  w.u32(b);
  w.u32(c);
}

}  // namespace

std::vector<std::uint64_t> exscan(std::span<const std::uint64_t> sizes, std::uint64_t base) {
  std::vector<std::uint64_t> out(sizes.size());
  std::uint64_t acc = base;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out[i] = acc;
    acc += sizes[i];
  }
  return out;
}

// ---- PMS ------------------------------------------------------------------

std::size_t pms_plane_size(std::size_t contexts, std::size_t values) {
  return 4 + kPmsIndexEntry * (contexts + 1) + (kMetricWidth + kValueWidth) * values;
}

std::size_t pms_plane_size(const PmsPlane& plane) {
  std::size_t contexts = 0;
  for (std::size_t i = 0; i < plane.size(); ++i)
    if (i == 0 || plane[i].context != plane[i - 1].context) ++contexts;
  return pms_plane_size(contexts, plane.size());
}

void append_pms_plane(Bytes& out, const PmsPlane& plane) {
  ByteWriter w(out);
  std::uint32_t contexts = 0;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const auto& e = plane[i];
    if (e.value == 0) throw std::invalid_argument("PMS plane holds a zero");
    if (i > 0) {
      const auto& p = plane[i - 1];
      if (e.context < p.context || (e.context == p.context && e.metric <= p.metric))
        throw std::invalid_argument("PMS plane not sorted by (context, metric)");
      if (e.context != p.context) ++contexts;
    } else {
      ++contexts;
    }
  }
  w.u32(contexts);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    if (i == 0 || plane[i].context != plane[i - 1].context) {
      w.u32(plane[i].context);
      w.u64(i);
    }
  }
  w.u32(kCtxSentinel);
  w.u64(plane.size());
  for (const auto& e : plane) w.u16(e.metric);
  for (const auto& e : plane) w.u64(e.value);
}

Bytes pms_header(const CubeShape& shape, std::span<const std::uint64_t> offsets) {
  Bytes out;
  ByteWriter w(out);
  write_header(w, "GPMS", shape.profiles, shape.contexts, shape.metrics);
  for (auto o : offsets) w.u64(o);
  return out;
}

Bytes write_pms(const CubeShape& shape, const std::vector<PmsPlane>& planes) {
  if (planes.size() != shape.profiles) throw std::invalid_argument("plane count != profiles");
  std::vector<std::uint64_t> sizes;
  for (const auto& p : planes) sizes.push_back(pms_plane_size(p));
  auto offsets = exscan(sizes, pms_prefix_size(shape));
  Bytes out = pms_header(shape, offsets);
  for (const auto& p : planes) append_pms_plane(out, p);
  return out;
}

namespace {

struct Prefix {
  CubeShape shape;
  std::vector<std::uint64_t> offsets;
};

Prefix read_prefix(const Bytes& bytes, const char* magic, bool profile_major) {
  ByteReader r(bytes);
  r.expect_magic(std::string_view(magic, 4));
  std::size_t vpos = r.pos();
  if (r.u16() != kSparseVersion) throw Error(Errc::CorruptFile, "unsupported version", vpos);
  r.u16();
  Prefix p;
  std::uint32_t a = r.u32(), b = r.u32();
  p.shape.metrics = r.u32();
  if (profile_major) {
    p.shape.profiles = a;
    p.shape.contexts = b;
  } else {
    p.shape.contexts = a;
    p.shape.profiles = b;
  }
  std::uint32_t n = profile_major ? p.shape.profiles : p.shape.contexts;
  r.need(std::size_t(n) * kOffsetWidth);
  p.offsets.resize(n);
  for (auto& o : p.offsets) o = r.u64();
  return p;
}

}  // namespace

PmsFile::PmsFile(Bytes bytes) : bytes_(std::move(bytes)) {
  Prefix pre = read_prefix(bytes_, "GPMS", true);
  shape_ = pre.shape;
  offsets_ = std::move(pre.offsets);
  if (shape_.metrics > kMetricSentinel) throw Error(Errc::CorruptFile, "too many metrics", 16);
  std::uint64_t expect = pms_prefix_size(shape_);
  for (ProfileIndex p = 0; p < shape_.profiles; ++p) {
    std::size_t at = kSparseHeaderSize + std::size_t(p) * kOffsetWidth;
    if (offsets_[p] != expect) throw Error(Errc::CorruptFile, "plane offsets not contiguous", at);
    ByteReader r(bytes_, offsets_[p]);
    std::uint32_t nctx = r.u32();
    r.need((std::size_t(nctx) + 1) * kPmsIndexEntry);
    std::size_t cidx_pos = r.pos();
    r.skip(std::size_t(nctx) * kPmsIndexEntry);
    if (r.u32() != kCtxSentinel) throw Error(Errc::CorruptFile, "missing cidxs sentinel", r.pos() - 4);
    std::uint64_t nvals = r.u64();
    if (nvals > r.remaining() / (kMetricWidth + kValueWidth))
      throw Error(Errc::CorruptFile, "truncated plane", r.pos());
    const std::uint8_t* base = bytes_.data();
    const std::uint8_t* mids = base + r.pos();
    const std::uint8_t* vals = mids + nvals * kMetricWidth;
    std::uint64_t prev_start = 0;
    for (std::uint32_t i = 0; i <= nctx; ++i) {
      const std::uint8_t* e = base + cidx_pos + std::size_t(i) * kPmsIndexEntry;
      std::uint32_t ctx = load_u32(e);
      std::uint64_t start = load_u64(e + 4);
      std::size_t epos = cidx_pos + std::size_t(i) * kPmsIndexEntry;
      if (i < nctx) {
        if (ctx >= shape_.contexts) throw Error(Errc::CorruptFile, "context id out of range", epos);
        if (i > 0 && ctx <= load_u32(e - kPmsIndexEntry))
          throw Error(Errc::CorruptFile, "cidxs not ascending", epos);
      }
      if ((i == 0 && start != 0) || (i > 0 && start <= prev_start) || start > nvals)
        throw Error(Errc::CorruptFile, "bad cidxs start", epos);
      if (i > 0) {
        for (std::uint64_t j = prev_start; j < start; ++j) {
          std::uint16_t m = load_u16(mids + j * kMetricWidth);
          if (m >= shape_.metrics || (j > prev_start && m <= load_u16(mids + (j - 1) * kMetricWidth)))
            throw Error(Errc::CorruptFile, "bad mids segment", (mids - base) + j * kMetricWidth);
          if (load_u64(vals + j * kValueWidth) == 0)
            throw Error(Errc::CorruptFile, "stored zero", (vals - base) + j * kValueWidth);
        }
      }
      prev_start = start;
    }
    if (nctx == 0 && nvals != 0) throw Error(Errc::CorruptFile, "values without contexts", cidx_pos);
    expect += pms_plane_size(nctx, nvals);
  }
  if (expect != bytes_.size()) throw Error(Errc::CorruptFile, "trailing bytes", expect);
}

PmsFile::PlaneView PmsFile::view(ProfileIndex p) const {
  if (p >= shape_.profiles)
    throw Error(Errc::UnknownProfile, "profile " + std::to_string(p));
  const std::uint8_t* at = bytes_.data() + offsets_[p];
  PlaneView v;
  v.nctx = load_u32(at);
  v.cidxs = at + 4;
  v.nvals = load_u64(v.cidxs + std::size_t(v.nctx) * kPmsIndexEntry + 4);
  v.mids = v.cidxs + (std::size_t(v.nctx) + 1) * kPmsIndexEntry;
  v.vals = v.mids + v.nvals * kMetricWidth;
  return v;
}

std::optional<std::uint64_t> PmsFile::lookup(ProfileIndex p, ContextId c, DbMetricId m,
                                             SearchStats* stats) const {
  PlaneView v = view(p);
  auto ctx_at = [&](std::size_t i) { return load_u32(v.cidxs + i * kPmsIndexEntry); };
  std::size_t i = counted_lower_bound(v.nctx, c, ctx_at, stats);
  if (stats) ++stats->comparisons;
  if (i == v.nctx || ctx_at(i) != c) return std::nullopt;
  std::uint64_t lo = load_u64(v.cidxs + i * kPmsIndexEntry + 4);
  std::uint64_t hi = load_u64(v.cidxs + (i + 1) * kPmsIndexEntry + 4);
  auto mid_at = [&](std::size_t j) { return load_u16(v.mids + (lo + j) * kMetricWidth); };
  std::size_t j = counted_lower_bound(hi - lo, m, mid_at, stats);
  if (stats) ++stats->comparisons;
  if (j == hi - lo || mid_at(j) != m) return std::nullopt;
  return load_u64(v.vals + (lo + j) * kValueWidth);
}

void PmsFile::plane_range(ProfileIndex p, ContextId lo_ctx, ContextId hi_ctx,
                          PmsPlane& out) const {
  PlaneView v = view(p);
  auto ctx_at = [&](std::size_t i) { return load_u32(v.cidxs + i * kPmsIndexEntry); };
  std::size_t i = counted_lower_bound(v.nctx, lo_ctx, ctx_at, nullptr);
  for (; i < v.nctx; ++i) {
    ContextId c = ctx_at(i);
    if (c >= hi_ctx) break;
    std::uint64_t lo = load_u64(v.cidxs + i * kPmsIndexEntry + 4);
    std::uint64_t hi = load_u64(v.cidxs + (i + 1) * kPmsIndexEntry + 4);
    for (std::uint64_t j = lo; j < hi; ++j)
      out.push_back(PmsEntry{c, load_u16(v.mids + j * kMetricWidth), load_u64(v.vals + j * kValueWidth)});
  }
}

PmsPlane PmsFile::plane(ProfileIndex p) const {
  PmsPlane out;
  plane_range(p, 0, kCtxSentinel, out);
  return out;
}

std::vector<PmsPlane> read_pms_planes(const PmsFile& f) {
  std::vector<PmsPlane> planes;
  for (ProfileIndex p = 0; p < f.shape().profiles; ++p) planes.push_back(f.plane(p));
  return planes;
}

// ---- CMS ------------------------------------------------------------------

std::size_t cms_plane_size(std::size_t metrics, std::size_t values) {
  return 4 + kCmsIndexEntry * (metrics + 1) + (kProfileWidth + kValueWidth) * values;
}

std::size_t cms_plane_size(const CmsPlane& plane) {
  std::size_t metrics = 0;
  for (std::size_t i = 0; i < plane.size(); ++i)
    if (i == 0 || plane[i].metric != plane[i - 1].metric) ++metrics;
  return cms_plane_size(metrics, plane.size());
}

void append_cms_plane(Bytes& out, const CmsPlane& plane) {
  ByteWriter w(out);
  std::uint32_t metrics = 0;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const auto& e = plane[i];
    if (e.value == 0) throw std::invalid_argument("CMS plane holds a zero");
    if (i > 0) {
      const auto& p = plane[i - 1];
      if (e.metric < p.metric || (e.metric == p.metric && e.profile <= p.profile))
        throw std::invalid_argument("CMS plane not sorted by (metric, profile)");
      if (e.metric != p.metric) ++metrics;
    } else {
      ++metrics;
    }
  }
  w.u32(metrics);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    if (i == 0 || plane[i].metric != plane[i - 1].metric) {
      w.u16(plane[i].metric);
      w.u64(i);
    }
  }
  w.u16(kMetricSentinel);
  w.u64(plane.size());
  for (const auto& e : plane) w.u32(e.profile);
  for (const auto& e : plane) w.u64(e.value);
}

Bytes cms_header(const CubeShape& shape, std::span<const std::uint64_t> offsets) {
  Bytes out;
  ByteWriter w(out);
  write_header(w, "GCMS", shape.contexts, shape.profiles, shape.metrics);
  for (auto o : offsets) w.u64(o);
  return out;
}

Bytes write_cms(const CubeShape& shape, const std::vector<CmsPlane>& planes) {
  if (planes.size() != shape.contexts) throw std::invalid_argument("plane count != contexts");
  std::vector<std::uint64_t> sizes;
  for (const auto& p : planes) sizes.push_back(cms_plane_size(p));
  auto offsets = exscan(sizes, cms_prefix_size(shape));
  Bytes out = cms_header(shape, offsets);
  for (const auto& p : planes) append_cms_plane(out, p);
  return out;
}

CmsFile::CmsFile(Bytes bytes) : bytes_(std::move(bytes)) {
  Prefix pre = read_prefix(bytes_, "GCMS", false);
  shape_ = pre.shape;
  offsets_ = std::move(pre.offsets);
  if (shape_.metrics > kMetricSentinel) throw Error(Errc::CorruptFile, "too many metrics", 16);
  std::uint64_t expect = cms_prefix_size(shape_);
  for (ContextId c = 0; c < shape_.contexts; ++c) {
    std::size_t at = kSparseHeaderSize + std::size_t(c) * kOffsetWidth;
    if (offsets_[c] != expect) throw Error(Errc::CorruptFile, "plane offsets not contiguous", at);
    ByteReader r(bytes_, offsets_[c]);
    std::uint32_t nmet = r.u32();
    r.need((std::size_t(nmet) + 1) * kCmsIndexEntry);
    std::size_t midx_pos = r.pos();
    r.skip(std::size_t(nmet) * kCmsIndexEntry);
    if (r.u16() != kMetricSentinel) throw Error(Errc::CorruptFile, "missing midxs sentinel", r.pos() - 2);
    std::uint64_t nvals = r.u64();
    if (nvals > r.remaining() / (kProfileWidth + kValueWidth))
      throw Error(Errc::CorruptFile, "truncated plane", r.pos());
    const std::uint8_t* base = bytes_.data();
    const std::uint8_t* pids = base + r.pos();
    const std::uint8_t* vals = pids + nvals * kProfileWidth;
    std::uint64_t prev_start = 0;
    for (std::uint32_t i = 0; i <= nmet; ++i) {
      std::size_t epos = midx_pos + std::size_t(i) * kCmsIndexEntry;
      const std::uint8_t* e = base + epos;
      std::uint16_t m = load_u16(e);
      std::uint64_t start = load_u64(e + 2);
      if (i < nmet) {
        if (m >= shape_.metrics) throw Error(Errc::CorruptFile, "metric id out of range", epos);
        if (i > 0 && m <= load_u16(e - kCmsIndexEntry))
          throw Error(Errc::CorruptFile, "midxs not ascending", epos);
      }
      if ((i == 0 && start != 0) || (i > 0 && start <= prev_start) || start > nvals)
        throw Error(Errc::CorruptFile, "bad midxs start", epos);
      if (i > 0) {
        for (std::uint64_t j = prev_start; j < start; ++j) {
          std::uint32_t p = load_u32(pids + j * kProfileWidth);
          if (p >= shape_.profiles || (j > prev_start && p <= load_u32(pids + (j - 1) * kProfileWidth)))
            throw Error(Errc::CorruptFile, "bad pids segment", (pids - base) + j * kProfileWidth);
          if (load_u64(vals + j * kValueWidth) == 0)
            throw Error(Errc::CorruptFile, "stored zero", (vals - base) + j * kValueWidth);
        }
      }
      prev_start = start;
    }
    if (nmet == 0 && nvals != 0) throw Error(Errc::CorruptFile, "values without metrics", midx_pos);
    expect += cms_plane_size(nmet, nvals);
  }
  if (expect != bytes_.size()) throw Error(Errc::CorruptFile, "trailing bytes", expect);
}

CmsFile::PlaneView CmsFile::view(ContextId c) const {
  if (c >= shape_.contexts) throw Error(Errc::UnknownContext, "context " + std::to_string(c));
  const std::uint8_t* at = bytes_.data() + offsets_[c];
  PlaneView v;
  v.nmet = load_u32(at);
  v.midxs = at + 4;
  v.nvals = load_u64(v.midxs + std::size_t(v.nmet) * kCmsIndexEntry + 2);
  v.pids = v.midxs + (std::size_t(v.nmet) + 1) * kCmsIndexEntry;
  v.vals = v.pids + v.nvals * kProfileWidth;
  return v;
}

std::optional<std::uint64_t> CmsFile::lookup(ContextId c, DbMetricId m, ProfileIndex p,
                                             SearchStats* stats) const {
  PlaneView v = view(c);
  auto met_at = [&](std::size_t i) { return load_u16(v.midxs + i * kCmsIndexEntry); };
  std::size_t i = counted_lower_bound(v.nmet, m, met_at, stats);
  if (stats) ++stats->comparisons;
  if (i == v.nmet || met_at(i) != m) return std::nullopt;
  std::uint64_t lo = load_u64(v.midxs + i * kCmsIndexEntry + 2);
  std::uint64_t hi = load_u64(v.midxs + (i + 1) * kCmsIndexEntry + 2);
  auto pid_at = [&](std::size_t j) { return load_u32(v.pids + (lo + j) * kProfileWidth); };
  std::size_t j = counted_lower_bound(hi - lo, p, pid_at, stats);
  if (stats) ++stats->comparisons;
  if (j == hi - lo || pid_at(j) != p) return std::nullopt;
  return load_u64(v.vals + (lo + j) * kValueWidth);
}

std::vector<std::pair<ProfileIndex, std::uint64_t>> CmsFile::scan(ContextId c,
                                                                  DbMetricId m) const {
  PlaneView v = view(c);
  auto met_at = [&](std::size_t i) { return load_u16(v.midxs + i * kCmsIndexEntry); };
  std::size_t i = counted_lower_bound(v.nmet, m, met_at, nullptr);
  std::vector<std::pair<ProfileIndex, std::uint64_t>> out;
  if (i == v.nmet || met_at(i) != m) return out;
  std::uint64_t lo = load_u64(v.midxs + i * kCmsIndexEntry + 2);
  std::uint64_t hi = load_u64(v.midxs + (i + 1) * kCmsIndexEntry + 2);
  for (std::uint64_t j = lo; j < hi; ++j)
    out.emplace_back(load_u32(v.pids + j * kProfileWidth), load_u64(v.vals + j * kValueWidth));
  return out;
}

std::size_t CmsFile::metric_count(ContextId c) const { return view(c).nmet; }

CmsPlane CmsFile::plane(ContextId c) const {
  PlaneView v = view(c);
  CmsPlane out;
  out.reserve(v.nvals);
  for (std::uint32_t i = 0; i < v.nmet; ++i) {
    std::uint16_t m = load_u16(v.midxs + std::size_t(i) * kCmsIndexEntry);
    std::uint64_t lo = load_u64(v.midxs + std::size_t(i) * kCmsIndexEntry + 2);
    std::uint64_t hi = load_u64(v.midxs + (std::size_t(i) + 1) * kCmsIndexEntry + 2);
    for (std::uint64_t j = lo; j < hi; ++j)
      out.push_back(CmsEntry{m, load_u32(v.pids + j * kProfileWidth), load_u64(v.vals + j * kValueWidth)});
  }
  return out;
}

std::vector<CmsPlane> read_cms_planes(const CmsFile& f) {
  std::vector<CmsPlane> planes;
  for (ContextId c = 0; c < f.shape().contexts; ++c) planes.push_back(f.plane(c));
  return planes;
}

}  // namespace gpuprof::formats
