#include "gpuprof/aggregator/aggregate.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gpuprof/aggregator/statistics.hpp"
#include "gpuprof/error.hpp"
#include "gpuprof/formats/bytes.hpp"
#include "gpuprof/formats/profile_file.hpp"
#include "gpuprof/formats/sparse_db.hpp"
#include "gpuprof/gpucct/reconstruct.hpp"

namespace gpuprof::aggregator {

namespace fs = std::filesystem;
using formats::Bytes;
using formats::DbMetricId;

// ---- helpers --------------------------------------------------------------

namespace {

/// Runs fn(0..n-1) on n threads; rethrows the first failure by index.
template <typename Fn>
void run_parallel(std::size_t n, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    threads.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Reduction tree of the given arity; each merge owns both operands.
template <typename T, typename Merge>
T reduce_tree(std::vector<T> items, std::size_t arity, Merge merge) {
  if (items.empty()) return T{};
  arity = std::max<std::size_t>(arity, 2);
  while (items.size() > 1) {
    std::vector<T> next((items.size() + arity - 1) / arity);
    run_parallel(next.size(), [&](std::size_t i) {
      const std::size_t lo = i * arity, hi = std::min(items.size(), lo + arity);
      T acc = std::move(items[lo]);
      for (std::size_t j = lo + 1; j < hi; ++j) merge(acc, std::move(items[j]));
      next[i] = std::move(acc);
    });
    items = std::move(next);
  }
  return std::move(items.front());
}

class OutFile {
 public:
  explicit OutFile(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd_ < 0) throw Error(Errc::IoError, "cannot open " + path + ": " + std::strerror(errno));
  }
  ~OutFile() {
    if (fd_ >= 0) ::close(fd_);
  }
  OutFile(const OutFile&) = delete;
  OutFile& operator=(const OutFile&) = delete;

  /// Safe to call concurrently for disjoint ranges.
  void write_at(std::uint64_t offset, std::span<const std::uint8_t> data) const {
    std::size_t done = 0;
    while (done < data.size()) {
      ssize_t n = ::pwrite(fd_, data.data() + done, data.size() - done, static_cast<off_t>(offset + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::IoError, "write failed on " + path_ + ": " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

ContextKind scope_context_kind(formats::ScopeKind k) {
  switch (k) {
    case formats::ScopeKind::Function: return ContextKind::Function;
    case formats::ScopeKind::Loop: return ContextKind::Loop;
    case formats::ScopeKind::Inline: return ContextKind::Inline;
    case formats::ScopeKind::Line: return ContextKind::Line;
  }
  return ContextKind::Function;
}

const std::string* module_path(const std::vector<LoadModule>& modules, ModuleId id) {
  for (const auto& m : modules)
    if (m.id == id) return &m.path;
  return nullptr;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::uint64_t combine(Combine c, std::optional<std::uint64_t> acc, std::uint64_t v) {
  if (!acc) return v;
  switch (c) {
    case Combine::Sum: return *acc + v;
    case Combine::Min: return std::min(*acc, v);
    case Combine::Max: return std::max(*acc, v);
  }
  return v;
}

}  // namespace

// ---- inputs ---------------------------------------------------------------

void AggregationPlan::validate() const {
  if (groups == 0 || threads == 0)
    throw Error(Errc::ConfigError, "worker groups and threads per group must be positive");
}

std::vector<std::pair<std::size_t, std::size_t>> partition(std::size_t n, std::size_t groups) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (groups == 0) return out;
  std::size_t at = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t len = n / groups + (g < n % groups ? 1 : 0);
    out.emplace_back(at, at + len);
    at += len;
  }
  return out;
}

Inputs acquire_inputs(const std::string& dir) {
  Inputs in;
  in.dir = dir;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(Errc::EmptyInput, "no measurement directory " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".prof") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::set<std::string> module_paths;
  for (const auto& f : files) {
    try {
      const Bytes bytes = formats::read_file(f.string());
      formats::ProfileHeader h = formats::peek_profile_header(bytes);
      for (const auto& m : h.load_modules) module_paths.insert(m.path);
      in.profiles.push_back({f.string(), f.filename().string(), h.id});
    } catch (const Error& e) {
      if (e.code() != Errc::CorruptFile && e.code() != Errc::IoError) throw;
      in.skipped.push_back(f.filename().string() + ": " + e.what());
    }
  }
  if (in.profiles.empty()) throw Error(Errc::EmptyInput, "no readable profiles in " + dir);
  std::stable_sort(in.profiles.begin(), in.profiles.end(),
                   [](const InputProfile& a, const InputProfile& b) {
                     return a.id != b.id ? a.id < b.id : a.file_name < b.file_name;
                   });
  ModuleId next = 1;
  for (const auto& p : module_paths) in.modules.push_back({next++, p});
  return in;
}

BinaryMap load_binaries(const std::string& measurement_dir) {
  BinaryMap out;
  const fs::path dir = fs::path(measurement_dir) / "binaries";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".gpubin") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    gpucct::GpuBinary b = gpucct::parse_gpubin(formats::read_text(f.string()));
    std::string name = b.module();
    out.emplace(std::move(name), std::move(b));
  }
  return out;
}

// ---- per-profile normalization ---------------------------------------------

NormalizedProfile normalize_profile(const Profile& p, const std::vector<LoadModule>& global_modules,
                                    const BinaryMap& binaries) {
  NormalizedProfile out{Profile(p.cct.table_ptr()), std::vector<NodeId>(p.cct.size(), kNoNode), {}};
  out.profile.id_tuple = p.id_tuple;
  out.profile.load_modules = global_modules;

  std::map<ModuleId, ModuleId> to_global;
  for (const auto& m : p.load_modules) {
    ModuleId g = 0;
    for (const auto& gm : global_modules)
      if (gm.path == m.path) g = gm.id;
    if (g == 0) throw Error(Errc::CorruptFile, "module " + m.path + " missing from the global module list");
    to_global[m.id] = g;
  }
  auto remap = [&](Frame f) {
    if (f.kind == FrameKind::Root || f.addr.module_id == kRootModule) return f;
    auto it = to_global.find(f.addr.module_id);
    if (it == to_global.end())
      throw Error(Errc::CorruptFile, "frame references unknown module " + std::to_string(f.addr.module_id));
    f.addr.module_id = it->second;
    return f;
  };

  auto& cct = out.profile.cct;
  cct.set_metrics(cct.root(), p.cct.node(p.cct.root()).metrics);
  out.node_map[0] = 0;
  std::vector<bool> consumed(p.cct.size(), false);
  for (NodeId id : p.cct.preorder()) {
    if (id == p.cct.root() || consumed[id]) continue;
    const CctNode& n = p.cct.node(id);
    if (consumed[n.parent] || out.node_map[n.parent] == kNoNode) {
      consumed[id] = true;
      continue;
    }
    const Frame f = remap(n.frame);
    const NodeId nid = cct.child(out.node_map[n.parent], f);
    out.node_map[id] = nid;
    cct.set_metrics(nid, n.metrics);

    if (!(f.is_placeholder() && f.placeholder == PlaceholderKind::KernelLaunch)) continue;
    gpucct::InstructionMetrics inst;
    std::vector<NodeId> inst_nodes;
    for (const auto& [cf, c] : n.children)
      if (cf.kind == FrameKind::GpuInstruction) {
        if (remap(cf).addr.module_id != f.addr.module_id)
          throw Error(Errc::CorruptFile, "kernel sample outside the kernel's module");
        inst[cf.addr.offset] = p.cct.node(c).metric_values();
        inst_nodes.push_back(c);
      }
    if (inst.empty()) continue;
    const std::string* path = module_path(global_modules, f.addr.module_id);
    auto bin = path ? binaries.find(*path) : binaries.end();
    if (bin == binaries.end()) {
      out.warnings.push_back("no GPU binary for module " + (path ? *path : std::to_string(f.addr.module_id)) +
                             "; kernel samples kept per instruction");
      continue;
    }
    gpucct::Reconstruction r =
        gpucct::reconstruct(bin->second, f.addr.module_id, f.addr.offset, inst, p.cct.table_ptr());
    for (NodeId c : inst_nodes) consumed[c] = true;
    if (!r.disconnected.empty()) {
      std::string names;
      for (const auto& d : r.disconnected) names += (names.empty() ? "" : ", ") + d;
      out.warnings.push_back("samples unreachable from kernel at " + hex(f.addr.offset) + " in " +
                             bin->first + ": " + names);
    }
    std::vector<NodeId> sub_map(r.subtree.size(), kNoNode);
    sub_map[r.subtree.root()] = nid;
    for (const auto& [m, v] : r.subtree.node(r.subtree.root()).metric_values()) cct.add_metric(nid, m, v);
    for (NodeId s : r.subtree.preorder()) {
      if (s == r.subtree.root()) continue;
      const CctNode& sn = r.subtree.node(s);
      sub_map[s] = cct.child(sub_map[sn.parent], sn.frame);
      for (const auto& [m, v] : sn.metric_values()) cct.add_metric(sub_map[s], m, v);
    }
  }
  return out;
}

ContextTree call_path_tree(const CallingContextTree& cct) {
  ContextTree t;
  std::vector<ContextId> map(cct.size(), 0);
  for (NodeId id : cct.preorder()) {
    if (id == cct.root()) continue;
    const CctNode& n = cct.node(id);
    map[id] = t.child(map[n.parent], ContextKey::from_frame(n.frame));
  }
  return t;
}

// ---- expansion ------------------------------------------------------------

Expansion expand_contexts(const ContextTree& raw, const StructureMap& structures,
                          const std::vector<LoadModule>& modules, const BinaryMap& binaries) {
  auto function_name = [&](ModuleId mod, std::uint64_t offset) -> std::string {
    const std::string* path = module_path(modules, mod);
    if (!path) return hex(offset);
    if (auto b = binaries.find(*path); b != binaries.end())
      if (auto f = b->second.function_by_entry(offset)) return b->second.functions()[*f].name;
    if (auto s = structures.find(mod); s != structures.end() && s->second)
      for (const auto* rec : s->second->resolve(offset))
        if (rec->kind == formats::ScopeKind::Function) return rec->name;
    return *path + "+" + hex(offset);
  };
  auto derived_info = [&](const ContextKey& k) {
    ContextInfo info;
    if (k.kind == ContextKind::Placeholder) {
      info.lo = k.value;
      if (static_cast<PlaceholderKind>(k.sub) == PlaceholderKind::KernelLaunch)
        info.name = function_name(k.module, k.value);
    } else if (k.kind == ContextKind::GpuScc) {
      info.lo = k.value;
      info.name = function_name(k.module, k.value);
    }
    return info;
  };

  Expansion e;
  e.raw_to_context.assign(raw.size(), 0);
  for (ContextId id : raw.preorder()) {
    if (id == raw.root()) continue;
    const ContextNode& n = raw.node(id);
    ContextId at = e.raw_to_context[n.parent];
    if (!n.key.is_address()) {
      ContextInfo info = n.info == ContextInfo{} ? derived_info(n.key) : n.info;
      e.raw_to_context[id] = e.tree.child(at, n.key, info);
      continue;
    }
    std::vector<const formats::StructRecord*> chain;
    if (auto s = structures.find(n.key.module); s != structures.end() && s->second)
      chain = s->second->resolve(n.key.value);
    if (chain.empty()) {
      const std::string* path = module_path(modules, n.key.module);
      ContextInfo info{"<unknown>", path ? *path : std::to_string(n.key.module), 0, 0, 0};
      at = e.tree.child(at, ContextKey{ContextKind::Unknown, n.key.module, 0, 0}, info);
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const auto* r = *it;
      at = e.tree.child(at, ContextKey{scope_context_kind(r->kind), n.key.module, r->id, 0},
                        ContextInfo{r->name, r->file, r->line, r->lo, r->hi});
    }
    e.raw_to_context[id] = at;
  }
  const auto remap = e.tree.canonicalize();
  for (auto& c : e.raw_to_context) c = remap[c];
  return e;
}

std::string context_label(const ContextNode& n, const std::vector<LoadModule>& modules) {
  const auto& k = n.key;
  const std::string* path = module_path(modules, k.module);
  const std::string mod = path ? *path : std::to_string(k.module);
  switch (k.kind) {
    case ContextKind::Root: return "<program root>";
    case ContextKind::Function: return n.info.name;
    case ContextKind::Inline: return "[inline] " + n.info.name;
    case ContextKind::Loop: return "loop at " + n.info.file + ":" + std::to_string(n.info.line);
    case ContextKind::Line: return n.info.file + ":" + std::to_string(n.info.line);
    case ContextKind::Unknown: return "<unknown function> [" + mod + "]";
    case ContextKind::Placeholder: {
      std::string s = std::string("<gpu ") + placeholder_name(static_cast<PlaceholderKind>(k.sub));
      if (!n.info.name.empty()) s += " " + n.info.name;
      return s + ">";
    }
    case ContextKind::GpuScc: return "<recursion " + n.info.name + ">";
    case ContextKind::CpuAddr:
    case ContextKind::GpuInstAddr:
    case ContextKind::GpuCallAddr: return mod + "+" + hex(k.value);
  }
  return "?";
}

// ---- traces ---------------------------------------------------------------

void sort_trace(std::vector<TraceRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const TraceRecord& a, const TraceRecord& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return (a.cct_node_id == 0) && (b.cct_node_id != 0);
  });
}

formats::TraceFile finalize_trace(const ProfileIdTuple& id, const Trace& trace,
                                  const std::vector<ContextId>& to_context) {
  formats::TraceFile out{id, trace.out_of_order, {}};
  out.records.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    if (r.cct_node_id >= to_context.size() || to_context[r.cct_node_id] == kNoNode)
      throw Error(Errc::DanglingTraceRef, "trace of " + id.to_string() + " references node " +
                                              std::to_string(r.cct_node_id) + " with no context");
    out.records.push_back({r.timestamp, to_context[r.cct_node_id]});
  }
  if (trace.out_of_order) sort_trace(out.records);
  return out;
}

// ---- the driver -----------------------------------------------------------

namespace {

struct MetricUnion {
  std::map<MetricId, MetricDescriptor> metrics;
  std::map<KindId, std::string> kinds;

  void add(const MetricTable& t) {
    for (const auto& k : t.kinds()) kinds.emplace(k.id, k.name);
    for (const auto& m : t.metrics()) {
      auto [it, fresh] = metrics.emplace(m.id, m);
      if (!fresh && !(it->second == m))
        throw Error(Errc::KindMismatch, "metric " + std::to_string(m.id) + " described differently across profiles");
    }
  }
  void merge(const MetricUnion& o) {
    for (const auto& [id, m] : o.metrics) {
      auto [it, fresh] = metrics.emplace(id, m);
      if (!fresh && !(it->second == m))
        throw Error(Errc::KindMismatch, "metric " + std::to_string(id) + " described differently across profiles");
    }
    kinds.insert(o.kinds.begin(), o.kinds.end());
  }
};

struct UnifyPartial {
  ContextTree tree;
  MetricUnion metrics;
};

struct ProfileStatus {
  bool ok = false;
  std::string error;
  std::vector<std::string> warnings;
};

using AccTable = std::vector<std::map<DbMetricId, Accumulator>>;

/// Dynamic claiming within a group's slice.
struct Claims {
  explicit Claims(const std::vector<std::pair<std::size_t, std::size_t>>& slices)
      : next(slices.size()), slices(slices) {
    for (std::size_t g = 0; g < slices.size(); ++g) next[g].store(slices[g].first);
  }
  std::optional<std::size_t> claim(std::size_t g) {
    std::size_t i = next[g].fetch_add(1);
    if (i >= slices[g].second) return std::nullopt;
    return i;
  }
  std::vector<std::atomic<std::size_t>> next;
  std::vector<std::pair<std::size_t, std::size_t>> slices;
};

Profile load_profile(const std::string& path) { return formats::read_profile(formats::read_file(path)); }

}  // namespace

AggregateSummary aggregate(const std::string& measurement_dir, const std::string& structure_dir,
                           const std::string& db_dir, const AggregationPlan& plan) {
  plan.validate();
  AggregateSummary summary;
  const std::size_t G = plan.groups, T = plan.threads, W = G * T;

  // Inputs, binaries and structure.
  Inputs in = acquire_inputs(measurement_dir);
  summary.skipped = in.skipped;
  const BinaryMap binaries = load_binaries(measurement_dir);
  std::map<std::string, formats::StructureFile> structure_files;
  std::error_code ec;
  if (structure_dir.empty() || !fs::is_directory(structure_dir, ec)) {
    summary.warnings.push_back(
        (structure_dir.empty() ? std::string("no structure directory")
                               : "structure directory '" + structure_dir + "' not found") +
        "; addresses attributed to unknown functions");
  } else {
    structure_files = formats::load_structure_dir(structure_dir);
  }
  StructureMap structures;
  for (const auto& m : in.modules) {
    if (auto it = structure_files.find(m.path); it != structure_files.end())
      structures[m.id] = &it->second;
    else if (!structure_files.empty())
      summary.warnings.push_back("no structure for module " + m.path);
  }

  // Pass 1: unify call paths.
  std::vector<ProfileStatus> status(in.profiles.size());
  std::vector<UnifyPartial> partials(W);
  {
    Claims claims(partition(in.profiles.size(), G));
    run_parallel(W, [&](std::size_t w) {
      const std::size_t g = w / T;
      while (auto i = claims.claim(g)) {
        std::optional<Profile> p;
        try {
          p.emplace(load_profile(in.profiles[*i].path));
        } catch (const Error& e) {
          if (e.code() != Errc::CorruptFile && e.code() != Errc::IoError) throw;
          status[*i].error = e.what();
          continue;
        }
        NormalizedProfile n = normalize_profile(*p, in.modules, binaries);
        partials[w].tree.merge(call_path_tree(n.profile.cct));
        partials[w].metrics.add(n.profile.cct.table());
        status[*i].ok = true;
        status[*i].warnings = std::move(n.warnings);
      }
    });
  }
  auto merge_partial = [](UnifyPartial& a, UnifyPartial&& b) {
    a.tree.merge(b.tree);
    a.metrics.merge(b.metrics);
  };
  std::vector<UnifyPartial> groups;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<UnifyPartial> mine;
    for (std::size_t k = 0; k < T; ++k) mine.push_back(std::move(partials[g * T + k]));
    groups.push_back(reduce_tree(std::move(mine), T, merge_partial));
  }
  const UnifyPartial unified = reduce_tree(std::move(groups), T, merge_partial);

  std::vector<InputProfile> valid;
  for (std::size_t i = 0; i < in.profiles.size(); ++i) {
    for (const auto& w : status[i].warnings) summary.warnings.push_back(in.profiles[i].file_name + ": " + w);
    if (status[i].ok)
      valid.push_back(in.profiles[i]);
    else
      summary.skipped.push_back(in.profiles[i].file_name + ": " + status[i].error);
  }
  if (valid.empty()) throw Error(Errc::EmptyInput, "no readable profiles in " + measurement_dir);

  // Expansion, computed once and shared read-only with every worker.
  const Expansion exp = expand_contexts(unified.tree, structures, in.modules, binaries);

  formats::Meta meta;
  meta.modules = in.modules;
  std::map<MetricId, std::size_t> rank_of;
  for (const auto& [id, d] : unified.metrics.metrics) {
    const std::size_t r = rank_of.size();
    rank_of[id] = r;
    meta.metrics.push_back({formats::inclusive_id(r), d.name, id, true, d.kind_id, d.combine});
    meta.metrics.push_back({formats::exclusive_id(r), d.name, id, false, d.kind_id, d.combine});
  }
  if (meta.metrics.size() >= formats::kMetricSentinel)
    throw Error(Errc::ConfigError, "too many metrics for the database");
  const std::size_t P = valid.size(), C = exp.tree.size();
  for (std::size_t i = 0; i < P; ++i) meta.profiles.push_back({valid[i].id, valid[i].file_name, std::nullopt});

  fs::create_directories(db_dir, ec);
  fs::remove_all(fs::path(db_dir) / "trace", ec);
  fs::create_directories(fs::path(db_dir) / "trace", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + db_dir + ": " + ec.message());

  // Pass 2: per-profile values, PMS planes and traces.
  std::vector<Bytes> planes(P);
  std::vector<std::optional<std::string>> trace_paths(P);
  std::vector<AccTable> accs(W);
  {
    Claims claims(partition(P, G));
    run_parallel(W, [&](std::size_t w) {
      const std::size_t g = w / T;
      AccTable& acc = accs[w];
      acc.resize(C);
      while (auto i = claims.claim(g)) {
        const Profile p = load_profile(valid[*i].path);
        NormalizedProfile n = normalize_profile(p, in.modules, binaries);
        const auto& cct = n.profile.cct;
        std::vector<ContextId> raw(cct.size(), 0), ctx(cct.size(), 0);
        for (NodeId id = 1; id < cct.size(); ++id) {
          const CctNode& node = cct.node(id);
          auto r = unified.tree.find_child(raw[node.parent], ContextKey::from_frame(node.frame));
          if (!r) throw std::logic_error("call path missing from the unified tree");
          raw[id] = *r;
          ctx[id] = exp.raw_to_context[*r];
        }
        const auto& table = cct.table();
        std::map<std::pair<ContextId, std::size_t>, std::uint64_t> excl, incl;
        for (NodeId id = 0; id < cct.size(); ++id)
          for (const auto& [m, v] : cct.node(id).metric_values()) {
            const auto key = std::make_pair(ctx[id], rank_of.at(m));
            auto it = excl.find(key);
            const Combine cb = table.find(m)->combine;
            excl[key] = combine(cb, it == excl.end() ? std::nullopt : std::optional(it->second), v);
          }
        for (const auto& [key, v] : excl) {
          const Combine cb = meta.metrics[formats::inclusive_id(key.second)].combine;
          for (ContextId c = key.first;; c = exp.tree.node(c).parent) {
            auto it = incl.find({c, key.second});
            incl[{c, key.second}] =
                combine(cb, it == incl.end() ? std::nullopt : std::optional(it->second), v);
            if (c == 0) break;
          }
        }
        formats::PmsPlane plane;
        for (const auto& [key, v] : incl) {
          if (v != 0) plane.push_back({key.first, formats::inclusive_id(key.second), v});
          if (auto e = excl.find(key); e != excl.end() && e->second != 0)
            plane.push_back({key.first, formats::exclusive_id(key.second), e->second});
        }
        for (const auto& e : plane) acc[e.context][e.metric].add(e.value);
        formats::append_pms_plane(planes[*i], plane);

        if (p.trace) {
          std::vector<ContextId> to_ctx(n.node_map.size(), kNoNode);
          for (std::size_t o = 0; o < n.node_map.size(); ++o)
            if (n.node_map[o] != kNoNode) to_ctx[o] = ctx[n.node_map[o]];
          const auto tf = finalize_trace(p.id_tuple, *p.trace, to_ctx);
          const std::string rel = "trace/" + std::to_string(*i) + ".trace";
          formats::write_file((fs::path(db_dir) / rel).string(), formats::write_trace(tf));
          trace_paths[*i] = rel;
        }
      }
    });
  }
  for (std::size_t i = 0; i < P; ++i) meta.profiles[i].trace = trace_paths[i];

  auto merge_acc = [](AccTable& a, AccTable&& b) {
    if (a.size() < b.size()) a.resize(b.size());
    for (std::size_t c = 0; c < b.size(); ++c)
      for (const auto& [m, x] : b[c]) a[c][m].merge(x);
  };
  std::vector<AccTable> group_accs;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<AccTable> mine;
    for (std::size_t k = 0; k < T; ++k) mine.push_back(std::move(accs[g * T + k]));
    group_accs.push_back(reduce_tree(std::move(mine), T, merge_acc));
  }
  AccTable acc = reduce_tree(std::move(group_accs), T, merge_acc);
  acc.resize(C);

  meta.contexts = exp.tree;
  meta.stats.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    for (const auto& [m, a] : acc[c]) meta.stats[c][m] = finalize(a);
  formats::write_text((fs::path(db_dir) / "meta").string(), formats::write_meta(meta));

  // PMS: exscan of plane sizes, then disjoint concurrent writes.
  const formats::CubeShape shape = meta.shape();
  const std::string pms_path = (fs::path(db_dir) / "profile.pms").string();
  {
    std::vector<std::uint64_t> sizes(P);
    for (std::size_t i = 0; i < P; ++i) sizes[i] = planes[i].size();
    const auto offsets = formats::exscan(sizes, formats::pms_prefix_size(shape));
    OutFile out(pms_path);
    out.write_at(0, formats::pms_header(shape, offsets));
    run_parallel(W, [&](std::size_t w) {
      for (std::size_t i = w; i < P; i += W) {
        out.write_at(offsets[i], planes[i]);
        Bytes().swap(planes[i]);
      }
    });
    summary.pms_bytes = P == 0 ? formats::pms_prefix_size(shape) : offsets.back() + sizes.back();
  }

  // CMS: plane sizes are known from the statistics; rounds bounded by the
  // memory budget, each split among workers by non-zero count.
  {
    std::vector<std::uint64_t> sizes(C), nnz(C);
    for (std::size_t c = 0; c < C; ++c) {
      for (const auto& [m, a] : acc[c]) nnz[c] += a.n;
      sizes[c] = formats::cms_plane_size(acc[c].size(), nnz[c]);
      summary.cms_max_plane = std::max(summary.cms_max_plane, sizes[c]);
    }
    const auto offsets = formats::exscan(sizes, formats::cms_prefix_size(shape));
    const formats::PmsFile pms(formats::read_file(pms_path));
    OutFile out((fs::path(db_dir) / "cct.cms").string());
    out.write_at(0, formats::cms_header(shape, offsets));
    std::atomic<std::uint64_t> held{0}, peak{0};

    std::size_t lo = 0;
    while (lo < C) {
      std::size_t hi = lo + 1;
      std::uint64_t bytes = sizes[lo];
      while (hi < C && bytes + sizes[hi] <= plan.memory_budget) bytes += sizes[hi++];
      ++summary.cms_rounds;

      // Contiguous chunks of roughly equal non-zero count.
      std::uint64_t total = 0;
      for (std::size_t c = lo; c < hi; ++c) total += nnz[c] + 1;
      std::vector<std::size_t> cut{lo};
      std::uint64_t run = 0;
      for (std::size_t c = lo; c < hi && cut.size() < W; ++c) {
        run += nnz[c] + 1;
        if (run * W >= total * cut.size()) cut.push_back(c + 1);
      }
      while (cut.size() <= W) cut.push_back(hi);
      cut.back() = hi;

      run_parallel(W, [&](std::size_t w) {
        const std::size_t clo = cut[w], chi = std::max(cut[w], cut[w + 1]);
        if (clo >= chi) return;
        std::vector<formats::CmsPlane> cplanes(chi - clo);
        formats::PmsPlane buf;
        for (std::size_t p = 0; p < P; ++p) {
          buf.clear();
          pms.plane_range(static_cast<formats::ProfileIndex>(p), static_cast<ContextId>(clo),
                          static_cast<ContextId>(chi), buf);
          for (const auto& e : buf)
            cplanes[e.context - clo].push_back({e.metric, static_cast<formats::ProfileIndex>(p), e.value});
        }
        Bytes chunk;
        for (auto& pl : cplanes) {
          std::stable_sort(pl.begin(), pl.end(),
                           [](const formats::CmsEntry& a, const formats::CmsEntry& b) { return a.metric < b.metric; });
          formats::append_cms_plane(chunk, pl);
          formats::CmsPlane().swap(pl);
        }
        if (chunk.size() != offsets[chi - 1] + sizes[chi - 1] - offsets[clo])
          throw std::logic_error("CMS plane sizes disagree with the statistics");
        const std::uint64_t now = held.fetch_add(chunk.size()) + chunk.size();
        std::uint64_t prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        out.write_at(offsets[clo], chunk);
        held.fetch_sub(chunk.size());
      });
      lo = hi;
    }
    summary.cms_peak_bytes = peak.load();
    summary.cms_bytes = C == 0 ? formats::cms_prefix_size(shape) : offsets.back() + sizes.back();
  }

  summary.profiles = static_cast<std::uint32_t>(P);
  summary.contexts = static_cast<std::uint32_t>(C);
  summary.metrics = static_cast<std::uint32_t>(meta.metrics.size());
  return summary;
}

}  // namespace gpuprof::aggregator
