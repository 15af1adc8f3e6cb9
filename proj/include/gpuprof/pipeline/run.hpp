#pragma once

// The measurement runtime: application threads, a synthetic GPU runtime, a
// monitor thread and tracing threads connected by SPSC channels.
//
//   app --operation--> monitor --activity--> app      (bidirectional channel)
//   app --launch--> runtime --buffer--> monitor --trace--> tracing thread

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpuprof/core/activity.hpp"
#include "gpuprof/core/model.hpp"
#include "gpuprof/pipeline/spsc_queue.hpp"
#include "gpuprof/pipeline/workload.hpp"

namespace gpuprof::pipeline {

struct Invocation {
  std::uint64_t id = 0;
  PlaceholderKind kind = PlaceholderKind::KernelLaunch;
  std::uint32_t thread = 0;
  std::uint32_t stream = 0;
};

struct ActivityMessage {
  GpuActivity activity;
  NodeId placeholder = kNoNode;
  bool end = false;
};
using ActivityChannel = ChainedSpscQueue<ActivityMessage>;

using CallPath = std::shared_ptr<const std::vector<Frame>>;

struct OperationTuple {
  Invocation invocation;
  NodeId placeholder = kNoNode;
  ActivityChannel* activity_channel = nullptr;
  /// Full path ending at the placeholder, for stream-side contexts.
  CallPath path;
};

using PendingOps = std::unordered_map<std::uint64_t, OperationTuple>;

struct MatchedActivity {
  GpuActivity activity;
  NodeId placeholder = kNoNode;
  ActivityChannel* channel = nullptr;
  CallPath path;
};

/// Pairs each activity with its pending operation. Tuples stay pending so
/// later activities of the same invocation still match.
/// Throws OrphanActivity for an unknown invocation id.
std::vector<MatchedActivity> monitor_match(std::span<const GpuActivity> batch,
                                           const PendingOps& pending);

struct TraceMessage {
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  CallPath path;
  bool last = false;
};
using TraceChannel = ChainedSpscQueue<TraceMessage>;

/// Builds one GPU stream's profile: a context tree of the call paths seen
/// on the stream and a trace of (start, context) records. The root context
/// marks idleness: it is appended where the stream goes idle and when the
/// trace is closed. A record earlier than its predecessor sets the
/// out-of-order flag and is followed by an idle marker at its end.
class StreamTracer {
 public:
  StreamTracer(ProfileIdTuple id, std::vector<LoadModule> modules);

  void append(std::uint64_t start, std::uint64_t end, std::span<const Frame> path);
  /// Closes the trace and hands over the profile.
  Profile finish();

  const Trace& trace() const { return *profile_.trace; }

 private:
  Profile profile_;
  std::optional<std::uint64_t> last_ts_;
  std::uint64_t busy_until_ = 0;
};

/// One polling pass over trace channels bound to this thread: drains every
/// channel into its tracer. Returns true once every channel has delivered
/// its final message.
bool tracing_poll(std::span<TraceChannel* const> channels, std::span<StreamTracer* const> tracers,
                  std::vector<bool>& closed);

struct RunOptions {
  /// Written verbatim as workload.spec; defaults to write_workload(spec).
  std::optional<std::string> spec_text;
};

struct RunSummary {
  std::uint64_t generated = 0;   // activities emitted by the runtime
  std::uint64_t attributed = 0;  // activities attributed into CCTs
  std::uint64_t orphans = 0;
  std::uint32_t cpu_profiles = 0;
  std::uint32_t stream_profiles = 0;
  std::uint64_t trace_records = 0;  // stream trace records, idle markers included
};

/// Runs the spec and writes the measurement directory. Throws ConfigError
/// for invalid specs and IoError on write failures.
RunSummary run_workload(const WorkloadSpec& spec, const std::string& out_dir,
                        const RunOptions& options = {});

}  // namespace gpuprof::pipeline
