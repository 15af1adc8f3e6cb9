#include "gpuprof/analysis/database.hpp"

#include <filesystem>

#include "gpuprof/aggregator/aggregate.hpp"
#include "gpuprof/error.hpp"
#include "gpuprof/formats/bytes.hpp"
#include "gpuprof/formats/trace_file.hpp"

namespace gpuprof::analysis {

namespace fs = std::filesystem;

std::vector<ContextId> routine_owners(const ContextTree& tree) {
  std::vector<ContextId> owner(tree.size(), kNoNode);
  for (ContextId c : tree.preorder()) {
    const auto& n = tree.node(c);
    if (n.key.is_routine())
      owner[c] = c;
    else if (c != tree.root())
      owner[c] = owner[n.parent];
  }
  return owner;
}

Database Database::open(const std::string& dir) {
  Database db;
  db.dir_ = dir;
  const fs::path root(dir);
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(Errc::IoError, "no database directory " + dir);
  auto meta = std::make_shared<formats::Meta>(formats::read_meta(formats::read_text((root / "meta").string())));
  auto pms = std::make_shared<formats::PmsFile>(formats::read_file((root / "profile.pms").string()));
  auto cms = std::make_shared<formats::CmsFile>(formats::read_file((root / "cct.cms").string()));
  if (!(pms->shape() == meta->shape()) || !(cms->shape() == meta->shape()))
    throw Error(Errc::CorruptFile, "database files disagree on the cube shape");

  auto traces = std::make_shared<std::vector<TraceLine>>();
  for (std::size_t p = 0; p < meta->profiles.size(); ++p) {
    const auto& prof = meta->profiles[p];
    if (!prof.trace) continue;
    formats::TraceFile tf = formats::read_trace(formats::read_file((root / *prof.trace).string()));
    for (std::size_t i = 0; i < tf.records.size(); ++i) {
      if (tf.records[i].cct_node_id >= meta->contexts.size())
        throw Error(Errc::CorruptFile, *prof.trace + ": unknown context", i);
      if (i > 0 && tf.records[i].timestamp < tf.records[i - 1].timestamp)
        throw Error(Errc::CorruptFile, *prof.trace + ": records out of timestamp order", i);
    }
    traces->push_back({p, tf.id, std::move(tf.records)});
  }
  db.owner_ = std::make_shared<const std::vector<ContextId>>(routine_owners(meta->contexts));
  db.meta_ = std::move(meta);
  db.pms_ = std::move(pms);
  db.cms_ = std::move(cms);
  db.traces_ = std::move(traces);
  return db;
}

const ContextNode& Database::context(ContextId c) const {
  if (c >= tree().size()) throw Error(Errc::UnknownContext, "no context " + std::to_string(c));
  return tree().node(c);
}

const formats::DbMetric& Database::metric(const std::string& name, bool inclusive) const {
  if (const auto* m = meta_->find_metric(name, inclusive)) return *m;
  throw Error(Errc::UnknownMetric, "no metric named '" + name + "'");
}

const formats::DbMetric& Database::metric(DbMetricId id) const {
  if (id >= meta_->metrics.size()) throw Error(Errc::UnknownMetric, "no metric id " + std::to_string(id));
  return meta_->metrics[id];
}

std::optional<aggregator::Stats> Database::stats(ContextId c, DbMetricId m) const {
  context(c);
  const auto& s = meta_->stats[c];
  if (auto it = s.find(m); it != s.end()) return it->second;
  return std::nullopt;
}

std::uint64_t Database::sum(ContextId c, DbMetricId m) const {
  auto s = stats(c, m);
  return s ? s->sum : 0;
}

std::string Database::label(ContextId c) const {
  return aggregator::context_label(context(c), meta_->modules);
}

}  // namespace gpuprof::analysis
