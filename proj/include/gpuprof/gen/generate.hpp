#pragma once

// Seeded synthetic application generator: a workload script, GPU binary
// descriptions, and structure files that cover every instruction.

#include <cstdint>
#include <map>
#include <string>

#include "gpuprof/formats/structure.hpp"
#include "gpuprof/gpucct/gpubin.hpp"
#include "gpuprof/pipeline/workload.hpp"

namespace gpuprof::gen {

struct GenOptions {
  std::uint64_t seed = 1;
  std::uint32_t threads = 2;
  std::uint32_t streams = 2;
  std::uint32_t kernels = 3;
  std::uint32_t devices = 1;
  std::uint32_t ops = 40;  // per thread
  std::uint64_t samples = 64;
  pipeline::SamplingMode sampling = pipeline::SamplingMode::PcSampling;
  bool tracing = true;
  bool out_of_order = false;
};

struct Generated {
  pipeline::WorkloadSpec spec;
  std::map<std::string, formats::StructureFile> structures;  // by module name
};

/// Throws ConfigError for zero threads, streams, kernels, devices or ops.
Generated generate(const GenOptions& options);

/// Writes workload.spec, binaries/<module>.gpubin and
/// structure/<module>.struct below `dir`.
void write_generated(const Generated& g, const std::string& dir);

}  // namespace gpuprof::gen
