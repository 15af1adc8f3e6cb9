#pragma once

// Profile-major (PMS) and context-major (CMS) sparse encodings of a
// (profile, context, metric) value cube. Each plane is a CSR-like block
// whose index array is itself sparse and closed by a sentinel pair carrying
// the plane's value count. See FORMATS.md for the byte layout.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gpuprof/formats/bytes.hpp"

namespace gpuprof::formats {

using ProfileIndex = std::uint32_t;
using ContextId = std::uint32_t;
using DbMetricId = std::uint16_t;

inline constexpr std::uint16_t kSparseVersion = 1;
inline constexpr std::size_t kSparseHeaderSize = 20;
inline constexpr ContextId kCtxSentinel = 0xFFFFFFFFu;
inline constexpr DbMetricId kMetricSentinel = 0xFFFFu;

// Field widths.
inline constexpr std::size_t kValueWidth = 8;
inline constexpr std::size_t kContextWidth = 4;
inline constexpr std::size_t kProfileWidth = 4;
inline constexpr std::size_t kMetricWidth = 2;
inline constexpr std::size_t kOffsetWidth = 8;
inline constexpr std::size_t kPmsIndexEntry = kContextWidth + kOffsetWidth;  // cidxs pair
inline constexpr std::size_t kCmsIndexEntry = kMetricWidth + kOffsetWidth;   // midxs pair

struct CubeShape {
  std::uint32_t profiles = 0;
  std::uint32_t contexts = 0;
  std::uint32_t metrics = 0;
  bool operator==(const CubeShape&) const = default;
};

struct PmsEntry {
  ContextId context = 0;
  DbMetricId metric = 0;
  std::uint64_t value = 0;
  bool operator==(const PmsEntry&) const = default;
};

struct CmsEntry {
  DbMetricId metric = 0;
  ProfileIndex profile = 0;
  std::uint64_t value = 0;
  bool operator==(const CmsEntry&) const = default;
};

/// One profile's non-zeros, sorted by (context, metric).
using PmsPlane = std::vector<PmsEntry>;
/// One context's non-zeros, sorted by (metric, profile).
using CmsPlane = std::vector<CmsEntry>;

// ---- plane encoding (used directly by parallel writers) -------------------

std::size_t pms_plane_size(const PmsPlane& plane);
/// Size from counts: `contexts` distinct contexts holding `values` non-zeros.
std::size_t pms_plane_size(std::size_t contexts, std::size_t values);
void append_pms_plane(Bytes& out, const PmsPlane& plane);

std::size_t cms_plane_size(const CmsPlane& plane);
/// Size from counts: `metrics` non-empty metrics holding `values` non-zeros.
std::size_t cms_plane_size(std::size_t metrics, std::size_t values);
void append_cms_plane(Bytes& out, const CmsPlane& plane);

/// Header plus the offset vector, given absolute plane offsets.
Bytes pms_header(const CubeShape& shape, std::span<const std::uint64_t> offsets);
Bytes cms_header(const CubeShape& shape, std::span<const std::uint64_t> offsets);
inline std::size_t pms_prefix_size(const CubeShape& s) {
  return kSparseHeaderSize + std::size_t(s.profiles) * kOffsetWidth;
}
inline std::size_t cms_prefix_size(const CubeShape& s) {
  return kSparseHeaderSize + std::size_t(s.contexts) * kOffsetWidth;
}

/// Exclusive prefix scan of `sizes`, shifted by `base`.
std::vector<std::uint64_t> exscan(std::span<const std::uint64_t> sizes, std::uint64_t base = 0);

// ---- whole-file writers ---------------------------------------------------

/// `planes[p]` is profile p's plane; planes.size() must equal shape.profiles.
Bytes write_pms(const CubeShape& shape, const std::vector<PmsPlane>& planes);
/// `planes[c]` is context c's plane; planes.size() must equal shape.contexts.
Bytes write_cms(const CubeShape& shape, const std::vector<CmsPlane>& planes);

// ---- readers --------------------------------------------------------------

/// Counts key comparisons made by lookups.
struct SearchStats {
  std::size_t comparisons = 0;
};

/// Immutable PMS reader; safe for concurrent use.
class PmsFile {
 public:
  /// Validates the whole file; throws CorruptFile.
  explicit PmsFile(Bytes bytes);

  const CubeShape& shape() const { return shape_; }
  /// Throws UnknownProfile when `p` is outside the offset vector.
  std::optional<std::uint64_t> lookup(ProfileIndex p, ContextId c, DbMetricId m,
                                      SearchStats* stats = nullptr) const;
  PmsPlane plane(ProfileIndex p) const;
  /// Entries of profile `p` with context in [lo, hi).
  void plane_range(ProfileIndex p, ContextId lo, ContextId hi, PmsPlane& out) const;
  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  Bytes bytes_;
  CubeShape shape_;
  std::vector<std::uint64_t> offsets_;
  struct PlaneView {
    const std::uint8_t* cidxs;
    std::uint32_t nctx;
    std::uint64_t nvals;
    const std::uint8_t* mids;
    const std::uint8_t* vals;
  };
  PlaneView view(ProfileIndex p) const;
};

/// Immutable CMS reader; safe for concurrent use.
class CmsFile {
 public:
  explicit CmsFile(Bytes bytes);

  const CubeShape& shape() const { return shape_; }
  /// Throws UnknownContext when `c` is outside the offset vector.
  std::optional<std::uint64_t> lookup(ContextId c, DbMetricId m, ProfileIndex p,
                                      SearchStats* stats = nullptr) const;
  /// The (profile, value) segment of one (context, metric), ascending by
  /// profile. Empty when the metric is absent at the context.
  std::vector<std::pair<ProfileIndex, std::uint64_t>> scan(ContextId c, DbMetricId m) const;
  CmsPlane plane(ContextId c) const;
  /// Number of non-empty metrics at `c`.
  std::size_t metric_count(ContextId c) const;
  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  Bytes bytes_;
  CubeShape shape_;
  std::vector<std::uint64_t> offsets_;
  struct PlaneView {
    const std::uint8_t* midxs;
    std::uint32_t nmet;
    std::uint64_t nvals;
    const std::uint8_t* pids;
    const std::uint8_t* vals;
  };
  PlaneView view(ContextId c) const;
};

/// Decodes every plane (round-trip support).
std::vector<PmsPlane> read_pms_planes(const PmsFile& f);
std::vector<CmsPlane> read_cms_planes(const CmsFile& f);

}  // namespace gpuprof::formats
