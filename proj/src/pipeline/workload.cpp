#include "gpuprof/pipeline/workload.hpp"

#include <charconv>
#include <filesystem>
#include <set>
#include <sstream>

#include "gpuprof/error.hpp"
#include "gpuprof/formats/bytes.hpp"

namespace gpuprof::pipeline {

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Kernel: return "kernel";
    case OpKind::CopyH2D: return "copy h2d";
    case OpKind::CopyD2H: return "copy d2h";
    case OpKind::Sync: return "sync";
    case OpKind::MemSet: return "memset";
    case OpKind::MemAlloc: return "alloc";
    case OpKind::Idle: return "idle";
  }
  return "?";
}

const char* sampling_name(SamplingMode m) {
  switch (m) {
    case SamplingMode::None: return "none";
    case SamplingMode::PcSampling: return "pc";
    case SamplingMode::Instrumentation: return "instrumentation";
  }
  return "?";
}

const ModuleSpec* WorkloadSpec::find_module(ModuleId id) const {
  for (const auto& m : modules)
    if (m.id == id) return &m;
  return nullptr;
}

const KernelSpec* WorkloadSpec::find_kernel(std::string_view name) const {
  for (const auto& k : kernels)
    if (k.name == name) return &k;
  return nullptr;
}

std::uint32_t WorkloadSpec::effective_tracing_threads() const {
  if (tracing_threads) return tracing_threads;
  return std::max<std::uint32_t>(1, streams / 8);
}

std::uint64_t WorkloadSpec::op_count() const {
  std::uint64_t n = 0;
  for (const auto& t : threads) n += t.ops.size();
  return n;
}

void WorkloadSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::ConfigError, msg); };
  if (threads.empty()) fail("at least one thread is required");
  if (streams == 0) fail("at least one stream is required");
  if (devices == 0) fail("at least one device is required");
  if (batch == 0) fail("batch must be positive");
  if (queue_capacity == 0) fail("queue_capacity must be positive");
  std::set<ModuleId> ids;
  std::set<std::string> names;
  for (const auto& m : modules) {
    if (m.id == kRootModule) fail("module id 0 is reserved");
    if (!ids.insert(m.id).second) fail("duplicate module id " + std::to_string(m.id));
    if (m.name.empty() || !names.insert(m.name).second) fail("bad or duplicate module name " + m.name);
    if (m.gpu && m.binary_path.empty()) fail("GPU module " + m.name + " needs a binary");
  }
  std::set<std::string> knames;
  for (const auto& k : kernels) {
    if (!knames.insert(k.name).second) fail("duplicate kernel " + k.name);
    const ModuleSpec* m = find_module(k.module);
    if (!m || !m->gpu) fail("kernel " + k.name + " must live in a GPU module");
    if (m->binary) {
      auto f = m->binary->function_by_name(k.name);
      if (!f || !m->binary->functions()[*f].kernel)
        fail("binary " + m->name + " has no kernel " + k.name);
    }
  }
  for (std::size_t t = 0; t < threads.size(); ++t) {
    for (const auto& op : threads[t].ops) {
      if (op.kind == OpKind::Idle) continue;
      if (op.stream >= streams) fail("stream " + std::to_string(op.stream) + " out of range");
      if (op.path.empty()) fail("operation without a call path in thread " + std::to_string(t));
      for (const auto& a : op.path) {
        const ModuleSpec* m = find_module(a.module_id);
        if (!m || m->gpu) fail("call path frame in unknown or GPU module " + std::to_string(a.module_id));
      }
      if (op.kind == OpKind::Kernel && !find_kernel(op.kernel)) fail("unknown kernel " + op.kernel);
    }
  }
}

namespace {

struct LineParser {
  std::vector<std::string> tok;
  std::size_t line_no;
  std::size_t at = 0;

  [[noreturn]] void fail(const std::string& msg) const { throw Error(Errc::ConfigError, msg, line_no); }
  bool done() const { return at >= tok.size(); }
  const std::string& next(const char* what) {
    if (done()) fail(std::string("missing ") + what);
    return tok[at++];
  }
  std::uint64_t num(const char* what) {
    std::string_view s = next(what);
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      s.remove_prefix(2);
      base = 16;
    }
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      fail(std::string("bad number for ") + what);
    return v;
  }
  std::uint32_t num32(const char* what) {
    std::uint64_t v = num(what);
    if (v > UINT32_MAX) fail(std::string(what) + " out of range");
    return static_cast<std::uint32_t>(v);
  }
  bool flag(const char* what) {
    const std::string& s = next(what);
    if (s == "on") return true;
    if (s == "off") return false;
    fail(std::string(what) + " must be on or off");
  }
  FrameAddr frame() {
    const std::string& s = next("frame");
    auto colon = s.find(':');
    if (colon == std::string::npos) fail("frame must be <module>:<offset>");
    LineParser sub{{s.substr(0, colon), s.substr(colon + 1)}, line_no};
    FrameAddr a;
    a.module_id = sub.num32("frame module");
    a.offset = sub.num("frame offset");
    return a;
  }
  void expect_end() {
    if (!done()) fail("unexpected token '" + tok[at] + "'");
  }
};

void parse_op_tail(LineParser& p, OpSpec& op, bool has_dur) {
  bool stream = false, cpu = false, dur = false;
  while (!p.done()) {
    const std::string& key = p.next("key");
    if (key == "stream") {
      op.stream = p.num32("stream");
      stream = true;
    } else if (key == "cpu") {
      op.cpu_ns = p.num("cpu");
      cpu = true;
    } else if (key == "dur" && has_dur) {
      op.dur_ns = p.num("dur");
      dur = true;
    } else if (key == "path") {
      while (!p.done()) op.path.push_back(p.frame());
    } else {
      p.fail("unknown key '" + key + "'");
    }
  }
  if (!stream || !cpu || (has_dur && !dur) || op.path.empty())
    p.fail(has_dur ? "operation needs stream, cpu, dur and path" : "operation needs stream, cpu and path");
}

}  // namespace

WorkloadSpec parse_workload(std::string_view text, const std::string& base_dir, bool load_binaries) {
  WorkloadSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  ThreadSpec* current = nullptr;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    LineParser p{{}, line_no};
    for (std::string t; ls >> t;) p.tok.push_back(t);
    if (p.tok.empty()) continue;
    if (!header) {
      if (p.tok.size() != 2 || p.tok[0] != "gpuprof-workload" || p.tok[1] != "1")
        p.fail("expected 'gpuprof-workload 1' header");
      header = true;
      continue;
    }
    const std::string kw = p.next("keyword");
    if (kw == "seed") spec.seed = p.num("seed");
    else if (kw == "node") spec.node = p.num32("node");
    else if (kw == "rank") spec.rank = p.num32("rank");
    else if (kw == "devices") spec.devices = p.num32("devices");
    else if (kw == "streams") spec.streams = p.num32("streams");
    else if (kw == "tracing") spec.tracing = p.flag("tracing");
    else if (kw == "tracing_threads") spec.tracing_threads = p.num32("tracing_threads");
    else if (kw == "batch") spec.batch = p.num32("batch");
    else if (kw == "queue_capacity") spec.queue_capacity = p.num32("queue_capacity");
    else if (kw == "out_of_order") spec.out_of_order = p.flag("out_of_order");
    else if (kw == "sampling") {
      const std::string& m = p.next("sampling mode");
      if (m == "none") spec.sampling = SamplingMode::None;
      else if (m == "pc") spec.sampling = SamplingMode::PcSampling;
      else if (m == "instrumentation") spec.sampling = SamplingMode::Instrumentation;
      else p.fail("sampling must be none, pc or instrumentation");
    } else if (kw == "module") {
      ModuleSpec m;
      m.id = p.num32("module id");
      m.name = p.next("module name");
      const std::string& kind = p.next("module kind");
      if (kind == "gpu") {
        m.gpu = true;
        m.binary_path = p.next("binary path");
        if (load_binaries) {
          std::filesystem::path bp = std::filesystem::path(base_dir) / m.binary_path;
          try {
            m.binary = gpucct::parse_gpubin(formats::read_text(bp.string()));
          } catch (const Error& e) {
            p.fail("cannot load binary " + bp.string() + ": " + e.what());
          }
        }
      } else if (kind != "cpu") {
        p.fail("module kind must be cpu or gpu");
      }
      spec.modules.push_back(std::move(m));
    } else if (kw == "kernel" && !current) {
      KernelSpec k;
      k.name = p.next("kernel name");
      k.module = p.num32("kernel module");
      while (!p.done()) {
        const std::string& key = p.next("key");
        if (key == "regs") k.regs = p.num32("regs");
        else if (key == "shmem") k.shmem = p.num32("shmem");
        else if (key == "samples") k.samples = p.num("samples");
        else p.fail("unknown kernel key '" + key + "'");
      }
      spec.kernels.push_back(std::move(k));
    } else if (kw == "thread") {
      std::uint32_t idx = p.num32("thread index");
      if (idx != spec.threads.size()) p.fail("threads must be numbered 0, 1, ... in order");
      spec.threads.emplace_back();
      current = &spec.threads.back();
    } else if (current && (kw == "kernel" || kw == "copy" || kw == "memset" || kw == "alloc" ||
                           kw == "sync" || kw == "idle")) {
      OpSpec op;
      if (kw == "kernel") {
        op.kind = OpKind::Kernel;
        op.kernel = p.next("kernel name");
        parse_op_tail(p, op, true);
      } else if (kw == "copy") {
        const std::string& dir = p.next("copy direction");
        if (dir == "h2d") op.kind = OpKind::CopyH2D;
        else if (dir == "d2h") op.kind = OpKind::CopyD2H;
        else p.fail("copy direction must be h2d or d2h");
        op.bytes = p.num("bytes");
        parse_op_tail(p, op, true);
      } else if (kw == "memset" || kw == "alloc") {
        op.kind = kw == "memset" ? OpKind::MemSet : OpKind::MemAlloc;
        op.bytes = p.num("bytes");
        parse_op_tail(p, op, true);
      } else if (kw == "sync") {
        op.kind = OpKind::Sync;
        parse_op_tail(p, op, false);
      } else {
        op.kind = OpKind::Idle;
        op.cpu_ns = p.num("idle time");
        p.expect_end();
      }
      current->ops.push_back(std::move(op));
    } else {
      p.fail("unknown keyword '" + kw + "'");
    }
    p.expect_end();
  }
  if (!header) throw Error(Errc::ConfigError, "empty workload spec", line_no);
  spec.validate();
  return spec;
}

WorkloadSpec load_workload(const std::string& path) {
  std::string text;
  try {
    text = formats::read_text(path);
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return parse_workload(text, std::filesystem::path(path).parent_path().string());
}

std::string write_workload(const WorkloadSpec& s) {
  std::ostringstream out;
  out << "gpuprof-workload 1\n"
      << "seed " << s.seed << "\nnode " << s.node << "\nrank " << s.rank << "\ndevices " << s.devices
      << "\nstreams " << s.streams << "\nsampling " << sampling_name(s.sampling) << "\ntracing "
      << (s.tracing ? "on" : "off") << "\ntracing_threads " << s.tracing_threads << "\nbatch "
      << s.batch << "\nqueue_capacity " << s.queue_capacity << "\nout_of_order "
      << (s.out_of_order ? "on" : "off") << '\n';
  for (const auto& m : s.modules) {
    out << "module " << m.id << ' ' << m.name << (m.gpu ? " gpu " + m.binary_path : " cpu") << '\n';
  }
  for (const auto& k : s.kernels)
    out << "kernel " << k.name << ' ' << k.module << " regs " << k.regs << " shmem " << k.shmem
        << " samples " << k.samples << '\n';
  for (std::size_t t = 0; t < s.threads.size(); ++t) {
    out << "thread " << t << '\n';
    for (const auto& op : s.threads[t].ops) {
      out << "  " << op_kind_name(op.kind);
      if (op.kind == OpKind::Idle) {
        out << ' ' << op.cpu_ns << '\n';
        continue;
      }
      if (op.kind == OpKind::Kernel) out << ' ' << op.kernel;
      if (op.kind == OpKind::CopyH2D || op.kind == OpKind::CopyD2H || op.kind == OpKind::MemSet ||
          op.kind == OpKind::MemAlloc)
        out << ' ' << op.bytes;
      out << " stream " << op.stream << " cpu " << op.cpu_ns;
      if (op.kind != OpKind::Sync) out << " dur " << op.dur_ns;
      out << " path";
      for (const auto& a : op.path) out << ' ' << a.module_id << ":0x" << std::hex << a.offset << std::dec;
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace gpuprof::pipeline
