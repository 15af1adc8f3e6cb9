#include "gpuprof/pipeline/run.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include "gpuprof/core/metrics.hpp"
#include "gpuprof/error.hpp"
#include "gpuprof/formats/bytes.hpp"
#include "gpuprof/formats/profile_file.hpp"
#include "gpuprof/pipeline/schedule.hpp"

namespace gpuprof::pipeline {

std::vector<MatchedActivity> monitor_match(std::span<const GpuActivity> batch,
                                           const PendingOps& pending) {
  std::vector<MatchedActivity> out;
  out.reserve(batch.size());
  for (const auto& a : batch) {
    auto it = pending.find(a.invocation_id);
    if (it == pending.end())
      throw Error(Errc::OrphanActivity, "activity for unknown invocation " + std::to_string(a.invocation_id));
    out.push_back({a, it->second.placeholder, it->second.activity_channel, it->second.path});
  }
  return out;
}

StreamTracer::StreamTracer(ProfileIdTuple id, std::vector<LoadModule> modules)
    : profile_(metrics::standard()) {
  profile_.id_tuple = id;
  profile_.load_modules = std::move(modules);
  profile_.trace.emplace();
}

void StreamTracer::append(std::uint64_t start, std::uint64_t end, std::span<const Frame> path) {
  const NodeId ctx = profile_.cct.insert_call_path(path);
  auto& rec = profile_.trace->records;
  if (last_ts_ && start < *last_ts_) {
    profile_.trace->out_of_order = true;
    rec.push_back({start, ctx});
    rec.push_back({end, profile_.cct.root()});
  } else {
    if (!rec.empty() && start > busy_until_) rec.push_back({busy_until_, profile_.cct.root()});
    rec.push_back({start, ctx});
  }
  last_ts_ = start;
  busy_until_ = std::max(busy_until_, end);
}

Profile StreamTracer::finish() {
  auto& rec = profile_.trace->records;
  if (!rec.empty()) rec.push_back({busy_until_, profile_.cct.root()});
  return std::move(profile_);
}

bool tracing_poll(std::span<TraceChannel* const> channels, std::span<StreamTracer* const> tracers,
                  std::vector<bool>& closed) {
  bool all = true;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    while (!closed[i]) {
      auto m = channels[i]->pop();
      if (!m) break;
      if (m->last) {
        closed[i] = true;
        break;
      }
      tracers[i]->append(m->start, m->end, *m->path);
    }
    all = all && closed[i];
  }
  return all;
}

namespace {

// Spin briefly, then sleep: keeps single-core hosts responsive.
class Backoff {
 public:
  void pause() {
    if (++spins_ < 32) {
      std::this_thread::yield();
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
  }
  void reset() { spins_ = 0; }

 private:
  int spins_ = 0;
};

struct RuntimeBuffer {
  std::vector<GpuActivity> activities;
  bool end = false;
};

PlaceholderKind placeholder_of(OpKind k) {
  switch (k) {
    case OpKind::Kernel: return PlaceholderKind::KernelLaunch;
    case OpKind::CopyH2D: return PlaceholderKind::CopyHostToDevice;
    case OpKind::CopyD2H: return PlaceholderKind::CopyDeviceToHost;
    case OpKind::Sync: return PlaceholderKind::Sync;
    case OpKind::MemSet: return PlaceholderKind::MemSet;
    case OpKind::MemAlloc: return PlaceholderKind::MemAlloc;
    case OpKind::Idle: break;
  }
  throw std::logic_error("idle ops have no placeholder");
}

struct Shared {
  Shared(const WorkloadSpec& s, const Schedule& sc, std::filesystem::path o)
      : spec(s), schedule(sc), out(std::move(o)) {}

  const WorkloadSpec& spec;
  const Schedule& schedule;
  std::vector<LoadModule> modules;
  std::filesystem::path out;
  std::vector<std::unique_ptr<ChainedSpscQueue<OperationTuple>>> op_channels;
  std::vector<std::unique_ptr<ActivityChannel>> activity_channels;
  std::vector<std::unique_ptr<ChainedSpscQueue<std::uint32_t>>> launch_queues;
  std::unique_ptr<ChainedSpscQueue<RuntimeBuffer>> buffers;
  std::vector<std::unique_ptr<TraceChannel>> trace_channels;
  std::atomic<bool> abort{false};
  std::atomic<std::uint64_t> attributed{0};
  std::atomic<std::uint64_t> orphans{0};
  std::atomic<std::uint64_t> trace_records{0};
  std::mutex error_mu;
  std::exception_ptr error;

  void fail(std::exception_ptr e) {
    std::lock_guard lock(error_mu);
    if (!error) error = e;
    abort.store(true);
  }
  void check_abort() const {
    if (abort.load(std::memory_order_relaxed)) throw std::runtime_error("pipeline aborted");
  }
};

void app_thread(Shared& sh, std::uint32_t t) {
  const auto& ops = sh.spec.threads[t].ops;
  const auto& sched = sh.schedule.threads[t];
  Profile prof(metrics::standard());
  prof.id_tuple = ProfileIdTuple::cpu(sh.spec.node, sh.spec.rank, t);
  prof.load_modules = sh.modules;
  prof.trace.emplace();
  auto& cct = prof.cct;
  auto& records = prof.trace->records;
  auto& ops_out = *sh.op_channels[t];
  auto& launches = *sh.launch_queues[t];
  auto& acts = *sh.activity_channels[t];
  std::uint64_t attributed = 0;
  bool ended = false;

  auto drain = [&] {
    while (auto m = acts.pop()) {
      if (m->end) {
        ended = true;
        return;
      }
      attribute_activity(cct, m->placeholder, m->activity);
      ++attributed;
    }
  };

  for (std::uint32_t i = 0; i < ops.size(); ++i) {
    const OpSpec& op = ops[i];
    const ScheduledOp& so = sched[i];
    if (op.kind == OpKind::Idle) {
      records.push_back({so.begin, cct.root()});
      continue;
    }
    auto frames = std::make_shared<std::vector<Frame>>();
    for (const auto& a : op.path) frames->push_back(Frame::cpu(a));
    const NodeId leaf = cct.insert_call_path(*frames);
    if (op.cpu_ns > 0) {
      cct.add_metric(leaf, metrics::cpu_time, op.cpu_ns);
      records.push_back({so.begin, leaf});
    }
    FrameAddr target{};
    if (op.kind == OpKind::Kernel) {
      const KernelSpec* k = sh.spec.find_kernel(op.kernel);
      const ModuleSpec* m = sh.spec.find_module(k->module);
      target = {m->id, m->binary->functions()[*m->binary->function_by_name(k->name)].entry};
    }
    frames->push_back(Frame::make_placeholder(placeholder_of(op.kind), target));
    const NodeId ph = cct.child(leaf, frames->back());
    if (op.kind == OpKind::Sync) records.push_back({so.issue, ph});

    OperationTuple tuple;
    tuple.invocation = {so.invocation, placeholder_of(op.kind), t, op.stream};
    tuple.placeholder = ph;
    tuple.activity_channel = &acts;
    tuple.path = std::move(frames);
    ops_out.push(std::move(tuple));
    launches.push(i);
    drain();
  }
  records.push_back({sh.schedule.thread_end[t], cct.root()});

  Backoff backoff;
  while (!ended) {
    sh.check_abort();
    drain();
    if (!ended) backoff.pause();
  }
  sh.attributed.fetch_add(attributed);
  if (!sh.spec.tracing) prof.trace.reset();
  formats::write_file((sh.out / prof.id_tuple.file_name()).string(), formats::write_profile(prof));
}

void runtime_thread(Shared& sh, const std::vector<Emission>& plan) {
  const std::size_t nt = sh.spec.threads.size();
  // Number of ops launched so far per thread, as op index + 1.
  std::vector<std::uint64_t> launched(nt, 0);
  RuntimeBuffer buf;
  Backoff backoff;
  for (const Emission& e : plan) {
    while (launched[e.thread] <= e.op) {
      if (auto idx = sh.launch_queues[e.thread]->pop()) {
        launched[e.thread] = *idx + 1;
        backoff.reset();
      } else {
        sh.check_abort();
        backoff.pause();
      }
    }
    buf.activities.push_back(e.activity);
    if (buf.activities.size() >= sh.spec.batch) {
      sh.buffers->push(std::move(buf));
      buf = RuntimeBuffer{};
    }
  }
  if (!buf.activities.empty()) sh.buffers->push(std::move(buf));
  sh.buffers->push(RuntimeBuffer{{}, true});
}

void monitor_thread(Shared& sh) {
  PendingOps pending;
  Backoff backoff;
  auto drain_ops = [&] {
    for (auto& ch : sh.op_channels)
      while (auto op = ch->pop()) pending.emplace(op->invocation.id, std::move(*op));
  };
  for (;;) {
    auto buf = sh.buffers->pop();
    if (!buf) {
      sh.check_abort();
      backoff.pause();
      continue;
    }
    backoff.reset();
    if (buf->end) break;
    drain_ops();
    for (const auto& a : buf->activities) {
      auto it = pending.find(a.invocation_id);
      if (it == pending.end()) {
        sh.orphans.fetch_add(1);
        continue;
      }
      const OperationTuple& op = it->second;
      op.activity_channel->push({a, op.placeholder, false});
      if (sh.spec.tracing && a.traceable())
        sh.trace_channels[a.stream_id]->push({a.start_ts, a.end_ts, op.path, false});
    }
  }
  for (auto& ch : sh.activity_channels) ch->push({{}, kNoNode, true});
  for (auto& ch : sh.trace_channels) ch->push({0, 0, nullptr, true});
}

void tracing_thread(Shared& sh, std::uint32_t k, std::uint32_t nthreads) {
  std::vector<TraceChannel*> channels;
  std::vector<std::unique_ptr<StreamTracer>> owned;
  std::vector<StreamTracer*> tracers;
  for (std::uint32_t s = k; s < sh.spec.streams; s += nthreads) {
    channels.push_back(sh.trace_channels[s].get());
    owned.push_back(std::make_unique<StreamTracer>(
        ProfileIdTuple::gpu(sh.spec.node, sh.spec.rank, s % sh.spec.devices, s), sh.modules));
    tracers.push_back(owned.back().get());
  }
  std::vector<bool> closed(channels.size(), false);
  Backoff backoff;
  while (!tracing_poll(channels, tracers, closed)) {
    sh.check_abort();
    backoff.pause();
  }
  for (auto& tr : owned) {
    Profile p = tr->finish();
    sh.trace_records.fetch_add(p.trace->records.size());
    formats::write_file((sh.out / p.id_tuple.file_name()).string(), formats::write_profile(p));
  }
}

}  // namespace

RunSummary run_workload(const WorkloadSpec& spec, const std::string& out_dir, const RunOptions& options) {
  spec.validate();
  for (const auto& m : spec.modules)
    if (m.gpu && !m.binary) throw Error(Errc::ConfigError, "binary for module " + m.name + " not loaded");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "binaries", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + out_dir + ": " + ec.message());

  const Schedule schedule = build_schedule(spec);
  const std::vector<Emission> plan = plan_activities(spec, schedule);

  Shared sh(spec, schedule, fs::path(out_dir));
  for (const auto& m : spec.modules) sh.modules.push_back({m.id, m.name});
  const std::uint32_t nt = static_cast<std::uint32_t>(spec.threads.size());
  for (std::uint32_t t = 0; t < nt; ++t) {
    sh.op_channels.push_back(std::make_unique<ChainedSpscQueue<OperationTuple>>(spec.queue_capacity));
    sh.activity_channels.push_back(std::make_unique<ActivityChannel>(spec.queue_capacity));
    sh.launch_queues.push_back(std::make_unique<ChainedSpscQueue<std::uint32_t>>(spec.queue_capacity));
  }
  sh.buffers = std::make_unique<ChainedSpscQueue<RuntimeBuffer>>(spec.queue_capacity);
  const std::uint32_t ntrace = spec.tracing ? std::min(spec.effective_tracing_threads(), spec.streams) : 0;
  if (spec.tracing)
    for (std::uint32_t s = 0; s < spec.streams; ++s)
      sh.trace_channels.push_back(std::make_unique<TraceChannel>(spec.queue_capacity));

  std::vector<std::thread> threads;
  auto launch = [&](auto fn) {
    threads.emplace_back([&sh, fn] {
      try {
        fn();
      } catch (...) {
        sh.fail(std::current_exception());
      }
    });
  };
  for (std::uint32_t k = 0; k < ntrace; ++k) launch([&sh, k, ntrace] { tracing_thread(sh, k, ntrace); });
  launch([&sh] { monitor_thread(sh); });
  launch([&sh, &plan] { runtime_thread(sh, plan); });
  for (std::uint32_t t = 0; t < nt; ++t) launch([&sh, t] { app_thread(sh, t); });
  for (auto& th : threads) th.join();
  if (sh.error) std::rethrow_exception(sh.error);

  for (const auto& m : spec.modules)
    if (m.gpu)
      formats::write_text((fs::path(out_dir) / "binaries" / (m.name + ".gpubin")).string(),
                          gpucct::write_gpubin(*m.binary));
  formats::write_text((fs::path(out_dir) / "workload.spec").string(),
                      options.spec_text ? *options.spec_text : write_workload(spec));

  RunSummary s;
  s.generated = plan.size();
  s.attributed = sh.attributed.load();
  s.orphans = sh.orphans.load();
  s.cpu_profiles = nt;
  s.stream_profiles = spec.tracing ? spec.streams : 0;
  s.trace_records = sh.trace_records.load();
  return s;
}

}  // namespace gpuprof::pipeline
