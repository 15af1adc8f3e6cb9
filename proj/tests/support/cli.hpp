#pragma once

// Runs the gpuprof executable and the checked-in golden query cases.

#include <sys/wait.h>

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace gpuprof::cli_support {

struct Result {
  int code = -1;
  std::string out;
};

inline std::string quote(const std::string& s) { return "'" + s + "'"; }

/// `args` go through the shell. Stderr is merged into `out` or dropped.
inline Result run_cli(const std::string& args, bool merge_stderr = true) {
  const std::string cmd = quote(GPUPROF_CLI) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// The database behind the goldens.
inline constexpr const char* kGoldenGen = "gen --seed 7 --threads 2 --streams 2 --kernels 3";

struct GoldenCase {
  std::string file;
  std::string command;  // "query" or "blame"
  std::string args;
};

inline const std::vector<GoldenCase>& golden_cases() {
  static const std::vector<GoldenCase> cases{
      {"topdown.txt", "query", "--depth 3 --metric cpu_time --metric gpu_kernel_time --derive warp_issue_rate"},
      {"topdown_stats.jsonl", "query",
       "--depth 2 --metric gpu_kernel_time --derive gpu_utilization --derive 'ratio=gpu_kernel_time / cpu_time' "
       "--derive registers_per_kernel --stats --json"},
      {"flat.txt", "query", "--view flat --metric gpu_kernel_time"},
      {"flat_cpu.jsonl", "query", "--view flat --metric cpu_time --json"},
      {"bottomup.txt", "query", "--view bottomup --function dgemm_wrap --metric gpu_kernel_time"},
      {"trace_stats.txt", "query", "--view trace --depth 1"},
      {"blame.txt", "blame", ""},
      {"blame_outer.txt", "blame", "--depth 1 --global"},
      {"blame.jsonl", "blame", "--json"},
  };
  return cases;
}

/// gen, run and prof for the golden database below `root`; returns the
/// failing step's output, or an empty string.
inline std::string build_golden_db(const std::string& root) {
  const std::vector<std::string> steps{
      std::string(kGoldenGen) + " -o " + quote(root + "/in"),
      "run " + quote(root + "/in/workload.spec") + " -o " + quote(root + "/meas"),
      "prof " + quote(root + "/meas") + " -S " + quote(root + "/in/structure") + " -o " + quote(root + "/db"),
  };
  for (const auto& s : steps)
    if (const auto r = run_cli(s); r.code != 0) return s + ": " + r.out;
  return {};
}

}  // namespace gpuprof::cli_support
