#include "gpuprof/gen/generate.hpp"

#include <filesystem>
#include <random>

#include "gpuprof/error.hpp"
#include "gpuprof/formats/bytes.hpp"

namespace gpuprof::gen {

namespace {

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  std::uint64_t below(std::uint64_t n) { return eng() % n; }
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }
  bool chance(unsigned pct) { return below(100) < pct; }
};

struct CpuFunction {
  std::string name;
  ModuleId module;
  std::uint64_t base;
};

constexpr std::uint64_t kCpuFnSize = 0x100;

formats::StructureFile cpu_structure(const std::string& module, const std::vector<CpuFunction>& fns,
                                     ModuleId id) {
  std::vector<formats::StructRecord> recs;
  std::uint32_t next = 1;
  auto add = [&](formats::ScopeKind k, std::uint32_t parent, std::uint64_t lo, std::uint64_t hi,
                 std::string name, std::uint32_t line) {
    recs.push_back({next, k, parent, lo, hi, std::move(name), module + ".c", line});
    return next++;
  };
  std::uint32_t fidx = 0;
  for (const auto& f : fns) {
    if (f.module != id) continue;
    const std::uint32_t src = 100 * (++fidx);
    auto line = [&](std::uint32_t parent, std::uint64_t lo) {
      add(formats::ScopeKind::Line, parent, lo, lo + 0x10, f.name, src + static_cast<std::uint32_t>((lo - f.base) / 0x10));
    };
    std::uint32_t fr = add(formats::ScopeKind::Function, 0, f.base, f.base + kCpuFnSize, f.name, src);
    for (std::uint64_t a = f.base; a < f.base + 0x40; a += 0x10) line(fr, a);
    std::uint32_t loop = add(formats::ScopeKind::Loop, fr, f.base + 0x40, f.base + 0xC0, f.name, src + 4);
    const bool inl = (fidx % 2) == 0;
    for (std::uint64_t a = f.base + 0x40; a < f.base + 0xC0; a += 0x10) {
      if (inl && a == f.base + 0x80) {
        std::uint32_t ir = add(formats::ScopeKind::Inline, loop, a, a + 0x20, f.name + "_inl", src + 50);
        line(ir, a);
        line(ir, a + 0x10);
        a += 0x10;
        continue;
      }
      line(loop, a);
    }
    for (std::uint64_t a = f.base + 0xC0; a < f.base + kCpuFnSize; a += 0x10) line(fr, a);
  }
  return formats::StructureFile(module, std::move(recs));
}

formats::StructureFile gpu_structure(const gpucct::GpuBinary& bin) {
  std::vector<formats::StructRecord> recs;
  std::uint32_t next = 1;
  const std::string file = bin.module() + ".cu";
  std::uint32_t fidx = 0;
  for (const auto& fn : bin.functions()) {
    const std::uint32_t src = 100 * (++fidx);
    const std::uint64_t lo = fn.entry, hi = fn.instructions.back().offset + 0x10;
    const std::uint32_t fr = next++;
    recs.push_back({fr, formats::ScopeKind::Function, 0, lo, hi, fn.name, file, src});
    // A loop over the middle third for kernels.
    std::uint64_t llo = hi, lhi = hi;
    std::uint32_t loop = 0;
    if (fn.kernel && fn.instructions.size() >= 6) {
      std::size_t n = fn.instructions.size();
      llo = fn.instructions[n / 3].offset;
      lhi = fn.instructions[2 * n / 3].offset;
      loop = next++;
      recs.push_back({loop, formats::ScopeKind::Loop, fr, llo, lhi, fn.name, file, src + 10});
    }
    for (const auto& in : fn.instructions) {
      std::uint32_t parent = (in.offset >= llo && in.offset < lhi) ? loop : fr;
      recs.push_back({next++, formats::ScopeKind::Line, parent, in.offset, in.offset + 0x10, fn.name, file,
                      src + 1 + static_cast<std::uint32_t>((in.offset - lo) / 0x20)});
    }
  }
  return formats::StructureFile(bin.module(), std::move(recs));
}

gpucct::GpuBinary make_binary(Rng& rng, const std::string& module, std::uint32_t kernels) {
  const std::uint32_t ndev = 4;
  std::vector<gpucct::GpuFunction> fns;
  std::uint64_t at = 0x100;
  auto make = [&](std::string name, bool kernel) {
    gpucct::GpuFunction f;
    f.name = std::move(name);
    f.kernel = kernel;
    f.entry = at;
    const std::uint64_t n = rng.range(6, 12);
    std::uint64_t block = rng.range(1, 64);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (i > 0 && rng.chance(30)) block = rng.range(1, 64);
      gpucct::GpuInstruction in;
      in.offset = at + 0x10 * i;
      in.exec_count = block;
      if (rng.chance(50)) {
        in.stall_pct = static_cast<std::uint32_t>(rng.range(10, 90));
        in.stall = static_cast<StallReason>(rng.range(1, kStallReasonCount - 1));
      }
      f.instructions.push_back(in);
    }
    at += 0x10 * n + 0x40;
    fns.push_back(std::move(f));
  };
  for (std::uint32_t d = 0; d < ndev; ++d) make("dev_" + std::to_string(d), false);
  for (std::uint32_t k = 0; k < kernels; ++k) make("kern_" + std::to_string(k), true);

  auto add_call = [&](std::uint32_t caller, std::uint32_t callee) {
    auto& ins = fns[caller].instructions;
    for (int tries = 0; tries < 8; ++tries) {
      std::size_t i = rng.range(1, ins.size() - 1);
      if (!ins[i].callee) {
        ins[i].callee = callee;
        return;
      }
    }
  };
  // dev_0 and dev_1 recurse into each other; dev_2 calls dev_3.
  add_call(0, 1);
  add_call(1, 0);
  add_call(2, 3);
  for (std::uint32_t k = 0; k < kernels; ++k) {
    const std::uint32_t calls = static_cast<std::uint32_t>(rng.range(1, 2));
    for (std::uint32_t c = 0; c < calls; ++c)
      add_call(ndev + k, static_cast<std::uint32_t>(rng.below(ndev)));
  }
  return gpucct::GpuBinary(module, std::move(fns));
}

}  // namespace

Generated generate(const GenOptions& o) {
  if (o.threads == 0 || o.streams == 0 || o.kernels == 0 || o.devices == 0 || o.ops == 0)
    throw Error(Errc::ConfigError, "threads, streams, kernels, devices and ops must be positive");
  Rng rng(o.seed);
  Generated g;
  auto& spec = g.spec;
  spec.seed = o.seed;
  spec.devices = o.devices;
  spec.streams = o.streams;
  spec.sampling = o.sampling;
  spec.tracing = o.tracing;
  spec.out_of_order = o.out_of_order;

  const std::string gpu_name = "gpu_kernels";
  spec.modules.push_back({1, "app", false, "", std::nullopt});
  spec.modules.push_back({2, "libcompute.so", false, "", std::nullopt});
  pipeline::ModuleSpec gm{3, gpu_name, true, "binaries/" + gpu_name + ".gpubin", std::nullopt};
  gm.binary = make_binary(rng, gpu_name, o.kernels);
  spec.modules.push_back(gm);

  std::vector<CpuFunction> cpu_fns;
  const char* app_fns[] = {"main", "solve", "setup", "step", "exchange"};
  const char* lib_fns[] = {"dgemm_wrap", "launch_helper", "copy_helper", "stream_wait"};
  for (std::size_t i = 0; i < 5; ++i) cpu_fns.push_back({app_fns[i], 1, 0x1000 * (i + 1)});
  for (std::size_t i = 0; i < 4; ++i) cpu_fns.push_back({lib_fns[i], 2, 0x1000 * (i + 1)});

  for (std::uint32_t k = 0; k < o.kernels; ++k) {
    pipeline::KernelSpec ks;
    ks.name = "kern_" + std::to_string(k);
    ks.module = 3;
    ks.regs = static_cast<std::uint32_t>(8 * rng.range(2, 16));
    ks.shmem = static_cast<std::uint32_t>(1024 * rng.range(0, 48));
    ks.samples = o.samples;
    spec.kernels.push_back(ks);
  }

  // A small fixed set of call paths: main -> {solve|setup} -> {step|exchange}? -> lib fn.
  auto site = [&](const CpuFunction& f) {
    return FrameAddr{f.module, f.base + 0x10 * rng.below(kCpuFnSize / 0x10) + 4};
  };
  std::vector<std::vector<FrameAddr>> paths;
  for (int p = 0; p < 6; ++p) {
    std::vector<FrameAddr> path{site(cpu_fns[0]), site(cpu_fns[1 + rng.below(2)])};
    if (rng.chance(60)) path.push_back(site(cpu_fns[3 + rng.below(2)]));
    path.push_back(site(cpu_fns[5 + rng.below(4)]));
    paths.push_back(std::move(path));
  }

  for (std::uint32_t t = 0; t < o.threads; ++t) {
    pipeline::ThreadSpec ts;
    for (std::uint32_t i = 0; i < o.ops; ++i) {
      pipeline::OpSpec op;
      const std::uint64_t r = rng.below(100);
      op.stream = static_cast<std::uint32_t>(rng.below(o.streams));
      op.cpu_ns = rng.range(100, 5000);
      op.dur_ns = rng.range(1000, 20000);
      op.path = paths[rng.below(paths.size())];
      if (r < 50) {
        op.kind = pipeline::OpKind::Kernel;
        op.kernel = "kern_" + std::to_string(rng.below(o.kernels));
      } else if (r < 65) {
        op.kind = pipeline::OpKind::CopyH2D;
        op.bytes = 1024 * rng.range(1, 1024);
      } else if (r < 80) {
        op.kind = pipeline::OpKind::CopyD2H;
        op.bytes = 1024 * rng.range(1, 1024);
      } else if (r < 85) {
        op.kind = pipeline::OpKind::MemSet;
        op.bytes = 1024 * rng.range(1, 256);
      } else if (r < 90) {
        op.kind = pipeline::OpKind::MemAlloc;
        op.bytes = 1024 * rng.range(1, 4096);
      } else if (r < 97) {
        op.kind = pipeline::OpKind::Sync;
        op.dur_ns = 0;
      } else {
        op.kind = pipeline::OpKind::Idle;
        op.cpu_ns = rng.range(500, 5000);
        op.path.clear();
        op.dur_ns = 0;
      }
      ts.ops.push_back(std::move(op));
    }
    spec.threads.push_back(std::move(ts));
  }
  spec.validate();

  g.structures.emplace("app", cpu_structure("app", cpu_fns, 1));
  g.structures.emplace("libcompute.so", cpu_structure("libcompute.so", cpu_fns, 2));
  g.structures.emplace(gpu_name, gpu_structure(*spec.modules[2].binary));
  return g;
}

void write_generated(const Generated& g, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "binaries", ec);
  fs::create_directories(fs::path(dir) / "structure", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir + ": " + ec.message());
  formats::write_text((fs::path(dir) / "workload.spec").string(), pipeline::write_workload(g.spec));
  for (const auto& m : g.spec.modules)
    if (m.gpu) formats::write_text((fs::path(dir) / m.binary_path).string(), gpucct::write_gpubin(*m.binary));
  for (const auto& [name, sf] : g.structures)
    formats::write_text((fs::path(dir) / "structure" / (name + ".struct")).string(), formats::write_structure(sf));
}

}  // namespace gpuprof::gen
