#include "gpuprof/formats/meta.hpp"

#include <json.hpp>

#include "gpuprof/error.hpp"

namespace gpuprof::formats {

using nlohmann::json;

namespace {

const char* combine_name(Combine c) {
  switch (c) {
    case Combine::Sum: return "sum";
    case Combine::Min: return "min";
    case Combine::Max: return "max";
  }
  return "sum";
}

Combine combine_from(const std::string& s) {
  if (s == "sum") return Combine::Sum;
  if (s == "min") return Combine::Min;
  if (s == "max") return Combine::Max;
  throw Error(Errc::CorruptFile, "meta: unknown combine '" + s + "'");
}

json profile_json(std::size_t index, const DbProfile& p) {
  json j{{"index", index},
         {"kind", p.id.is_gpu() ? "gpu_stream" : "cpu_thread"},
         {"node", p.id.node},
         {"rank", p.id.rank},
         {"thread", p.id.thread_id},
         {"device", p.id.device_id},
         {"stream", p.id.stream_id},
         {"source", p.source}};
  j["trace"] = p.trace ? json(*p.trace) : json(nullptr);
  return j;
}

}  // namespace

const DbMetric* Meta::find_metric(const std::string& name, bool inclusive) const {
  for (const auto& m : metrics)
    if (m.name == name && m.inclusive == inclusive) return &m;
  return nullptr;
}

const LoadModule* Meta::find_module(ModuleId id) const {
  for (const auto& m : modules)
    if (m.id == id) return &m;
  return nullptr;
}

std::string write_meta(const Meta& meta) {
  json j;
  j["format"] = "gpuprof-db";
  j["version"] = kMetaVersion;
  json mods = json::array();
  for (const auto& m : meta.modules) mods.push_back({{"id", m.id}, {"path", m.path}});
  j["modules"] = std::move(mods);
  json profs = json::array();
  for (std::size_t i = 0; i < meta.profiles.size(); ++i) profs.push_back(profile_json(i, meta.profiles[i]));
  j["profiles"] = std::move(profs);
  json mets = json::array();
  for (const auto& m : meta.metrics)
    mets.push_back({{"id", m.id},
                    {"name", m.name},
                    {"base", m.base},
                    {"scope", m.inclusive ? "inclusive" : "exclusive"},
                    {"kind", m.kind},
                    {"combine", combine_name(m.combine)}});
  j["metrics"] = std::move(mets);
  json ctxs = json::array();
  json stats = json::array();
  for (ContextId c = 0; c < meta.contexts.size(); ++c) {
    const auto& n = meta.contexts.node(c);
    json e{{"id", c},
           {"kind", context_kind_name(n.key.kind)},
           {"module", n.key.module},
           {"value", n.key.value},
           {"sub", n.key.sub},
           {"name", n.info.name},
           {"file", n.info.file},
           {"line", n.info.line},
           {"lo", n.info.lo},
           {"hi", n.info.hi}};
    e["parent"] = n.parent == kNoNode ? json(nullptr) : json(n.parent);
    ctxs.push_back(std::move(e));
    if (c < meta.stats.size())
      for (const auto& [m, s] : meta.stats[c])
        stats.push_back({{"context", c}, {"metric", m},     {"n", s.n},           {"sum", s.sum},
                         {"min", s.min}, {"max", s.max},    {"mean", s.mean},     {"stddev", s.stddev},
                         {"cv", s.cv}});
  }
  j["contexts"] = std::move(ctxs);
  j["stats"] = std::move(stats);
  return j.dump(1) + "\n";
}

Meta read_meta(const std::string& text) {
  Meta meta;
  try {
    const json j = json::parse(text);
    if (j.at("format") != "gpuprof-db" || j.at("version") != kMetaVersion)
      throw Error(Errc::CorruptFile, "meta: unsupported format or version");
    for (const auto& m : j.at("modules"))
      meta.modules.push_back({m.at("id").get<ModuleId>(), m.at("path").get<std::string>()});
    for (const auto& p : j.at("profiles")) {
      DbProfile dp;
      const bool gpu = p.at("kind") == "gpu_stream";
      const auto node = p.at("node").get<std::uint32_t>(), rank = p.at("rank").get<std::uint32_t>();
      dp.id = gpu ? ProfileIdTuple::gpu(node, rank, p.at("device"), p.at("stream"))
                  : ProfileIdTuple::cpu(node, rank, p.at("thread"));
      dp.source = p.at("source").get<std::string>();
      if (!p.at("trace").is_null()) dp.trace = p.at("trace").get<std::string>();
      meta.profiles.push_back(std::move(dp));
    }
    for (const auto& m : j.at("metrics")) {
      DbMetric d;
      d.id = m.at("id").get<DbMetricId>();
      d.name = m.at("name").get<std::string>();
      d.base = m.at("base").get<MetricId>();
      d.inclusive = m.at("scope") == "inclusive";
      d.kind = m.at("kind").get<KindId>();
      d.combine = combine_from(m.at("combine").get<std::string>());
      if (d.id != meta.metrics.size())
        throw Error(Errc::CorruptFile, "meta: metric ids must be dense");
      meta.metrics.push_back(std::move(d));
    }
    const auto& ctxs = j.at("contexts");
    for (std::size_t i = 0; i < ctxs.size(); ++i) {
      const auto& e = ctxs[i];
      if (e.at("id").get<std::size_t>() != i) throw Error(Errc::CorruptFile, "meta: context ids must be dense");
      if (i == 0) {
        if (!e.at("parent").is_null()) throw Error(Errc::CorruptFile, "meta: context 0 must be the root");
        continue;
      }
      ContextKey key{context_kind_from_name(e.at("kind")), e.at("module"), e.at("value"), e.at("sub")};
      ContextInfo info{e.at("name"), e.at("file"), e.at("line"), e.at("lo"), e.at("hi")};
      const auto parent = e.at("parent").get<ContextId>();
      if (parent >= i) throw Error(Errc::CorruptFile, "meta: context parent after child");
      if (meta.contexts.find_child(parent, key) || meta.contexts.child(parent, key, info) != i)
        throw Error(Errc::CorruptFile, "meta: contexts are not in canonical order");
    }
    const auto order = meta.contexts.preorder();
    for (ContextId c = 0; c < order.size(); ++c)
      if (order[c] != c) throw Error(Errc::CorruptFile, "meta: contexts not in preorder");
    meta.stats.resize(meta.contexts.size());
    for (const auto& s : j.at("stats")) {
      const auto c = s.at("context").get<ContextId>();
      const auto m = s.at("metric").get<DbMetricId>();
      if (c >= meta.stats.size() || m >= meta.metrics.size())
        throw Error(Errc::CorruptFile, "meta: statistic for an unknown context or metric");
      meta.stats[c][m] = aggregator::Stats{s.at("n"),    s.at("sum"),    s.at("min"), s.at("max"),
                                           s.at("mean"), s.at("stddev"), s.at("cv")};
    }
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("meta: ") + e.what());
  }
  return meta;
}

}  // namespace gpuprof::formats
