#include "gpuprof/pipeline/schedule.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <random>

#include "gpuprof/error.hpp"

namespace gpuprof::pipeline {

Schedule build_schedule(const WorkloadSpec& spec) {
  const std::size_t nt = spec.threads.size();
  Schedule s;
  s.threads.resize(nt);
  s.thread_end.assign(nt, 0);
  std::vector<std::size_t> next(nt, 0);
  std::vector<std::uint64_t> stream_free(spec.streams, 0);
  using Item = std::pair<std::uint64_t, std::uint32_t>;  // (issue time, thread)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;

  auto advance = [&](std::uint32_t t) {
    const auto& ops = spec.threads[t].ops;
    auto& clock = s.thread_end[t];
    while (next[t] < ops.size() && ops[next[t]].kind == OpKind::Idle) {
      ScheduledOp so;
      so.begin = clock;
      so.resume = clock + ops[next[t]].cpu_ns;
      clock = so.resume;
      s.threads[t].push_back(so);
      ++next[t];
    }
    if (next[t] < ops.size()) ready.emplace(clock + ops[next[t]].cpu_ns, t);
  };
  for (std::uint32_t t = 0; t < nt; ++t) advance(t);

  std::uint64_t seq = 0;
  while (!ready.empty()) {
    auto [issue, t] = ready.top();
    ready.pop();
    const OpSpec& op = spec.threads[t].ops[next[t]];
    ScheduledOp so;
    so.invocation = ++seq;
    so.begin = s.thread_end[t];
    so.issue = issue;
    std::uint64_t& free = stream_free[op.stream];
    if (op.kind == OpKind::Sync) {
      so.start = issue;
      so.end = std::max(issue, free);
      so.resume = so.end;
    } else {
      so.start = std::max(issue, free);
      so.end = so.start + op.dur_ns;
      free = so.end;
      so.resume = issue;
    }
    s.thread_end[t] = so.resume;
    s.threads[t].push_back(so);
    ++next[t];
    advance(t);
  }
  return s;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint32_t kernel_index(const WorkloadSpec& spec, const KernelSpec& k) {
  const ModuleSpec* m = spec.find_module(k.module);
  if (!m || !m->binary) throw Error(Errc::ConfigError, "binary for kernel " + k.name + " not loaded");
  auto f = m->binary->function_by_name(k.name);
  if (!f) throw Error(Errc::ConfigError, "binary " + m->name + " has no kernel " + k.name);
  return *f;
}

}  // namespace

SampleBatchPayload draw_samples(const gpucct::GpuBinary& binary, ModuleId module,
                                std::uint32_t kernel, std::uint64_t n, std::uint64_t seed,
                                std::uint64_t invocation) {
  std::vector<const gpucct::GpuInstruction*> insts;
  std::vector<std::uint64_t> cumulative;
  std::uint64_t total = 0;
  for (std::uint32_t f : binary.reachable(kernel))
    for (const auto& in : binary.functions()[f].instructions)
      if (in.exec_count > 0) {
        total += in.exec_count;
        insts.push_back(&in);
        cumulative.push_back(total);
      }
  SampleBatchPayload batch;
  if (total == 0 || n == 0) return batch;
  // mt19937_64 output is fixed by the standard; no std distributions are
  // used so results do not depend on the library implementation.
  std::mt19937_64 eng(splitmix64(seed ^ splitmix64(invocation)));
  std::map<std::pair<std::uint64_t, StallReason>, std::uint64_t> counts;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t r = eng() % total;
    std::size_t k = std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin();
    const auto* in = insts[k];
    StallReason why = (eng() % 100) < in->stall_pct ? in->stall : StallReason::None;
    ++counts[{in->offset, why}];
  }
  for (const auto& [key, c] : counts) batch.samples.push_back({{module, key.first}, key.second, c});
  return batch;
}

InstrCountsPayload exact_counts(const gpucct::GpuBinary& binary, ModuleId module, std::uint32_t kernel) {
  InstrCountsPayload out;
  for (std::uint32_t f : binary.reachable(kernel))
    for (const auto& in : binary.functions()[f].instructions)
      if (in.exec_count > 0) out.counts.push_back({{module, in.offset}, in.exec_count});
  std::sort(out.counts.begin(), out.counts.end(),
            [](const InstrCount& a, const InstrCount& b) { return a.addr < b.addr; });
  return out;
}

std::vector<Emission> plan_activities(const WorkloadSpec& spec, const Schedule& schedule) {
  struct Keyed {
    std::uint64_t start, invocation;
    int sub;
    Emission e;
  };
  std::vector<Keyed> all;
  for (std::uint32_t t = 0; t < spec.threads.size(); ++t) {
    const auto& ops = spec.threads[t].ops;
    for (std::uint32_t i = 0; i < ops.size(); ++i) {
      const OpSpec& op = ops[i];
      if (op.kind == OpKind::Idle) continue;
      const ScheduledOp& so = schedule.threads[t][i];
      GpuActivity a;
      a.invocation_id = so.invocation;
      a.stream_id = op.stream;
      a.start_ts = so.start;
      a.end_ts = so.end;
      switch (op.kind) {
        case OpKind::Kernel: {
          const KernelSpec* k = spec.find_kernel(op.kernel);
          a.payload = KernelPayload{k->regs, k->shmem};
          all.push_back({so.start, so.invocation, 0, {t, i, a}});
          if (spec.sampling == SamplingMode::None) continue;
          const ModuleSpec* m = spec.find_module(k->module);
          std::uint32_t kf = kernel_index(spec, *k);
          GpuActivity b = a;
          if (spec.sampling == SamplingMode::PcSampling) {
            auto batch = draw_samples(*m->binary, m->id, kf, k->samples, spec.seed, so.invocation);
            if (batch.samples.empty()) continue;
            b.payload = std::move(batch);
          } else {
            auto counts = exact_counts(*m->binary, m->id, kf);
            if (counts.counts.empty()) continue;
            b.payload = std::move(counts);
          }
          all.push_back({so.start, so.invocation, 1, {t, i, std::move(b)}});
          continue;
        }
        case OpKind::CopyH2D: a.payload = CopyPayload{op.bytes, CopyDirection::HostToDevice}; break;
        case OpKind::CopyD2H: a.payload = CopyPayload{op.bytes, CopyDirection::DeviceToHost}; break;
        case OpKind::Sync: a.payload = SyncPayload{}; break;
        case OpKind::MemSet: a.payload = MemSetPayload{op.bytes}; break;
        case OpKind::MemAlloc: a.payload = MemAllocPayload{op.bytes}; break;
        case OpKind::Idle: break;
      }
      all.push_back({so.start, so.invocation, 0, {t, i, std::move(a)}});
    }
  }
  std::sort(all.begin(), all.end(), [](const Keyed& x, const Keyed& y) {
    return std::tie(x.start, x.invocation, x.sub) < std::tie(y.start, y.invocation, y.sub);
  });
  std::vector<Emission> out;
  out.reserve(all.size());
  for (auto& k : all) out.push_back(std::move(k.e));

  if (spec.out_of_order) {
    std::vector<std::vector<std::size_t>> per_stream(spec.streams);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i].activity.traceable()) per_stream[out[i].activity.stream_id].push_back(i);
    for (const auto& idx : per_stream)
      for (std::size_t k = 0; k + 1 < idx.size(); k += 4) std::swap(out[idx[k]], out[idx[k + 1]]);
  }
  return out;
}

}  // namespace gpuprof::pipeline
