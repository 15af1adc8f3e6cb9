// gpuprof: generate, measure, aggregate and analyze synthetic GPU workloads.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <httplib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "gpuprof/aggregator/aggregate.hpp"
#include "gpuprof/analysis/derived.hpp"
#include "gpuprof/analysis/trace_analysis.hpp"
#include "gpuprof/analysis/views.hpp"
#include "gpuprof/error.hpp"
#include "gpuprof/gen/generate.hpp"
#include "gpuprof/pipeline/run.hpp"
#include "gpuprof/server/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpuprof;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : "-"; }

/// Aligned text table; the last column is left-aligned free text.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : rows_{std::move(header)} {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  void print(std::ostream& os) const {
    std::vector<std::size_t> width(rows_[0].size(), 0);
    for (const auto& r : rows_)
      for (std::size_t i = 0; i + 1 < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    for (const auto& r : rows_) {
      std::string line;
      for (std::size_t i = 0; i + 1 < r.size(); ++i)
        line += std::string(width[i] - r[i].size(), ' ') + r[i] + "  ";
      line += r.back();
      os << line << '\n';
    }
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::uint64_t parse_bytes(const std::string& s) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw CLI::ValidationError("--mem", "expected a byte count such as 4096, 64K, 16M or 1G");
  }
  const std::string suffix = s.substr(pos);
  if (suffix.empty()) return v;
  if (suffix == "K" || suffix == "k") return v << 10;
  if (suffix == "M" || suffix == "m") return v << 20;
  if (suffix == "G" || suffix == "g") return v << 30;
  throw CLI::ValidationError("--mem", "unknown suffix '" + suffix + "'");
}

// gen -----------------------------------------------------------------------

struct GenArgs {
  gen::GenOptions opt;
  std::string sampling = "pc";
  bool no_trace = false;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  gen::GenOptions opt = a.opt;
  if (a.sampling == "none") opt.sampling = pipeline::SamplingMode::None;
  else if (a.sampling == "pc") opt.sampling = pipeline::SamplingMode::PcSampling;
  else opt.sampling = pipeline::SamplingMode::Instrumentation;
  opt.tracing = !a.no_trace;
  const auto g = gen::generate(opt);
  gen::write_generated(g, a.out);
  std::cout << "generated " << a.out << ": " << g.spec.threads.size() << " threads, "
            << g.spec.op_count() << " operations, " << g.spec.kernels.size() << " kernels, "
            << g.structures.size() << " structure files\n";
  return 0;
}

// run -----------------------------------------------------------------------

struct RunArgs {
  std::string spec;
  std::string out;
  bool no_trace = false;
};

int cmd_run(const RunArgs& a) {
  std::ifstream in(a.spec, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + a.spec);
  std::stringstream text;
  text << in.rdbuf();
  const auto base = fs::path(a.spec).parent_path().string();
  auto spec = pipeline::parse_workload(text.str(), base.empty() ? "." : base);
  pipeline::RunOptions opt;
  if (a.no_trace) spec.tracing = false;
  else opt.spec_text = text.str();
  const auto s = pipeline::run_workload(spec, a.out, opt);
  std::cout << "measured " << a.out << ": " << s.cpu_profiles << " cpu profiles, "
            << s.stream_profiles << " stream profiles, " << s.generated << " activities, "
            << s.attributed << " attributed, " << s.orphans << " orphans, " << s.trace_records
            << " trace records\n";
  return 0;
}

// prof ----------------------------------------------------------------------

struct ProfArgs {
  std::string measurements;
  std::string structure;
  std::string out;
  aggregator::AggregationPlan plan;
  std::string mem;
};

int cmd_prof(ProfArgs a) {
  if (!a.mem.empty()) a.plan.memory_budget = parse_bytes(a.mem);
  const auto s = aggregator::aggregate(a.measurements, a.structure, a.out, a.plan);
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : s.skipped) std::cerr << "warning: skipped " << f << '\n';
  std::cout << "database " << a.out << ": " << s.profiles << " profiles, " << s.contexts
            << " contexts, " << s.metrics << " metrics, " << s.pms_bytes << " PMS bytes, "
            << s.cms_bytes << " CMS bytes, " << s.cms_rounds << " CMS rounds\n";
  return 0;
}

// query ---------------------------------------------------------------------

struct QueryArgs {
  std::string db;
  std::string view = "topdown";
  std::vector<std::string> metrics;
  ContextId context = 0;
  std::size_t depth = 1;
  std::string function;
  std::vector<std::string> derive;
  bool stats = false;
  bool json = false;
};

std::vector<std::pair<std::string, analysis::DerivedExpr>> derived_columns(
    const std::vector<std::string>& defs) {
  std::vector<std::pair<std::string, analysis::DerivedExpr>> out;
  for (const auto& d : defs) {
    if (d.find('=') == std::string::npos) {
      const auto& presets = analysis::derived_presets();
      auto it = presets.find(d);
      if (it == presets.end())
        throw CLI::ValidationError("--derive", "'" + d + "' is neither name=expr nor a preset");
      out.emplace_back(d, analysis::DerivedExpr::parse(it->second));
    } else {
      out.push_back(analysis::parse_definition(d));
    }
  }
  return out;
}

int query_topdown(const analysis::Database& db, const QueryArgs& a) {
  const auto metrics = a.metrics.empty() ? std::vector<std::string>{"cpu_time"} : a.metrics;
  const auto derive = derived_columns(a.derive);
  std::vector<std::vector<std::optional<double>>> dvals;
  for (const auto& [name, expr] : derive) dvals.push_back(analysis::eval_derived(db, expr));
  db.context(a.context);
  const auto first = db.metric(metrics[0], true).id;

  std::vector<std::string> header{"id"};
  for (const auto& m : metrics) {
    header.push_back(m + " (I)");
    header.push_back(m + " (E)");
  }
  for (const auto& d : derive) header.push_back(d.first);
  if (a.stats) {
    for (const char* h : {"n", "mean", "stddev", "cv"}) header.push_back(h);
  }
  header.push_back("context");
  Table table(header);

  auto emit = [&](auto&& self, ContextId parent, std::size_t level) -> void {
    for (const auto& r : analysis::view_topdown(db, parent, metrics)) {
      const auto st = db.stats(r.context, first);
      if (a.json) {
        json j{{"id", r.context}, {"parent", parent}, {"depth", level}, {"label", r.label},
               {"kind", context_kind_name(r.kind)}};
        for (std::size_t i = 0; i < metrics.size(); ++i) {
          j["inclusive"][metrics[i]] = r.inclusive[i];
          j["exclusive"][metrics[i]] = r.exclusive[i];
        }
        for (std::size_t i = 0; i < derive.size(); ++i) {
          const auto& v = dvals[i][r.context];
          j["derived"][derive[i].first] = v ? json(*v) : json(nullptr);
        }
        if (a.stats) {
          j["stats"] = st ? json{{"n", st->n}, {"mean", st->mean}, {"stddev", st->stddev}, {"cv", st->cv}}
                          : json(nullptr);
        }
        std::cout << j.dump() << '\n';
      } else {
        std::vector<std::string> row{std::to_string(r.context)};
        for (std::size_t i = 0; i < metrics.size(); ++i) {
          row.push_back(std::to_string(r.inclusive[i]));
          row.push_back(std::to_string(r.exclusive[i]));
        }
        for (const auto& col : dvals) row.push_back(fmt_optional(col[r.context]));
        if (a.stats) {
          if (st) {
            row.insert(row.end(), {std::to_string(st->n), fmt_double(st->mean), fmt_double(st->stddev),
                                   fmt_double(st->cv)});
          } else {
            row.insert(row.end(), {"0", "-", "-", "-"});
          }
        }
        row.push_back(std::string(2 * level, ' ') + r.label);
        table.add(std::move(row));
      }
      if (level + 1 < a.depth && r.has_children) self(self, r.context, level + 1);
    }
  };
  emit(emit, a.context, 0);
  if (!a.json) table.print(std::cout);
  return 0;
}

int query_flat(const analysis::Database& db, const QueryArgs& a) {
  const std::string metric = a.metrics.empty() ? "gpu_kernel_time" : a.metrics[0];
  Table table({"exclusive", "inclusive", "instances", "routine"});
  for (const auto& r : analysis::view_flat(db, metric)) {
    if (a.json) {
      std::cout << json{{"routine", r.label}, {"module", r.module}, {"exclusive", r.exclusive},
                        {"inclusive", r.inclusive}, {"instances", r.instances}}
                       .dump()
                << '\n';
    } else {
      table.add({std::to_string(r.exclusive), std::to_string(r.inclusive), std::to_string(r.instances),
                 r.label});
    }
  }
  if (!a.json) table.print(std::cout);
  return 0;
}

int query_bottomup(const analysis::Database& db, const QueryArgs& a) {
  if (a.function.empty()) throw CLI::ValidationError("--function", "required for the bottomup view");
  const std::string metric = a.metrics.empty() ? "gpu_kernel_time" : a.metrics[0];
  const auto rows = analysis::view_bottomup(db, a.function, metric);
  std::uint64_t total = 0;
  for (const auto& r : rows) total += r.cost;
  Table table({"cost", "caller"});
  table.add({std::to_string(total), a.function});
  auto emit = [&](auto&& self, const std::vector<analysis::BottomUpRow>& level, std::size_t indent,
                  const std::string& path) -> void {
    for (const auto& r : level) {
      if (a.json) {
        std::cout << json{{"function", a.function}, {"path", path + r.label}, {"depth", indent},
                          {"caller", r.label}, {"cost", r.cost}}
                         .dump()
                  << '\n';
      } else {
        table.add({std::to_string(r.cost), std::string(2 * indent, ' ') + r.label});
      }
      self(self, r.callers, indent + 1, path + r.label + " <- ");
    }
  };
  emit(emit, rows, 1, "");
  if (!a.json) table.print(std::cout);
  return 0;
}

int query_trace(const analysis::Database& db, const QueryArgs& a) {
  Table table({"fraction", "ns", "frame"});
  for (const auto& s : analysis::trace_area_stats(db, a.depth)) {
    if (a.json) {
      std::cout << json{{"frame", s.name}, {"ns", s.ns}, {"fraction", s.fraction}}.dump() << '\n';
    } else {
      table.add({fmt_double(s.fraction), std::to_string(s.ns), s.name});
    }
  }
  if (!a.json) table.print(std::cout);
  return 0;
}

int cmd_query(const QueryArgs& a) {
  const auto db = analysis::Database::open(a.db);
  if (a.view == "topdown") return query_topdown(db, a);
  if (a.view == "flat") return query_flat(db, a);
  if (a.view == "bottomup") return query_bottomup(db, a);
  return query_trace(db, a);
}

// blame ---------------------------------------------------------------------

struct BlameArgs {
  std::string db;
  std::optional<std::size_t> depth;
  bool global = false;
  bool json = false;
};

int cmd_blame(const BlameArgs& a) {
  const auto db = analysis::Database::open(a.db);
  analysis::BlameOptions opt;
  opt.depth = a.depth;
  opt.per_rank = !a.global;
  const auto r = analysis::blame_idleness(db, opt);
  if (a.json) {
    for (const auto& e : r.entries)
      std::cout << json{{"routine", e.routine}, {"blamed_ns", e.blamed.str()}, {"share", e.share}}.dump()
                << '\n';
    return 0;
  }
  std::cout << "GPU idleness blame, scope " << (a.global ? "global" : "rank") << ", depth "
            << (a.depth ? std::to_string(*a.depth) : std::string("leaf")) << ": "
            << fmt_double(static_cast<double>(r.total)) << " ns\n";
  Table table({"share", "blamed_ns", "routine"});
  for (const auto& e : r.entries)
    table.add({fmt_double(e.share), fmt_double(static_cast<double>(e.blamed)), e.routine});
  table.print(std::cout);
  return 0;
}

// serve ---------------------------------------------------------------------

struct ServeArgs {
  std::string db;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const ServeArgs& a) {
  const auto db = analysis::Database::open(a.db);
  server::Service service(db);
  httplib::Server srv;
  service.mount(srv);
  int port = a.port;
  if (port == 0) {
    port = srv.bind_to_any_port(a.host);
  } else if (!srv.bind_to_port(a.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(Errc::IoError, "cannot listen on " + a.host + ":" + std::to_string(a.port));
  std::cout << "serving " << a.db << " on http://" << a.host << ':' << port << std::endl;
  return srv.listen_after_bind() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpuprof: synthetic GPU workload measurement, aggregation and analysis"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a workload spec, GPU binaries and structure files");
  g->add_option("--seed", gen.opt.seed, "RNG seed");
  g->add_option("--threads", gen.opt.threads, "CPU threads");
  g->add_option("--streams", gen.opt.streams, "GPU streams per device");
  g->add_option("--kernels", gen.opt.kernels, "Distinct kernels");
  g->add_option("--devices", gen.opt.devices, "GPU devices");
  g->add_option("--ops", gen.opt.ops, "Operations per thread");
  g->add_option("--samples", gen.opt.samples, "PC samples per kernel launch");
  g->add_option("--sampling", gen.sampling, "Instruction measurement")
      ->check(CLI::IsMember({"none", "pc", "instrumentation"}));
  g->add_flag("--no-trace", gen.no_trace, "Disable tracing in the spec");
  g->add_flag("--out-of-order", gen.opt.out_of_order, "Deliver some activities out of order");
  g->add_option("-o,--out", gen.out, "Output directory")->required();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Execute a workload spec into a measurement directory");
  r->add_option("spec", run.spec, "workload.spec path")->required();
  r->add_option("-o,--out", run.out, "Measurement directory")->required();
  r->add_flag("--no-trace", run.no_trace, "Record no traces");

  ProfArgs prof;
  auto* p = app.add_subcommand("prof", "Aggregate a measurement directory into a database");
  p->add_option("measurements", prof.measurements, "Measurement directory")->required();
  p->add_option("-S,--structure", prof.structure, "Structure file directory");
  p->add_option("-o,--out", prof.out, "Database directory")->required();
  p->add_option("-G,--groups", prof.plan.groups, "Worker groups");
  p->add_option("-t,--threads", prof.plan.threads, "Workers per group");
  p->add_option("--mem", prof.mem, "CMS memory budget per round (bytes, K, M or G suffix)");

  QueryArgs query;
  auto* q = app.add_subcommand("query", "Print a profile view");
  q->add_option("db", query.db, "Database directory")->required();
  q->add_option("--view", query.view, "topdown, bottomup, flat or trace")
      ->check(CLI::IsMember({"topdown", "bottomup", "flat", "trace"}));
  q->add_option("--metric", query.metrics, "Metric name (repeatable for topdown)");
  q->add_option("--context", query.context, "Topdown parent context");
  q->add_option("--depth", query.depth, "Topdown levels, or trace call-stack depth");
  q->add_option("--function", query.function, "Bottomup callee label");
  q->add_option("--derive", query.derive, "Derived column name=expr or a preset name");
  q->add_flag("--stats", query.stats, "Add per-profile statistics of the first metric");
  q->add_flag("--json", query.json, "Emit JSON lines");

  BlameArgs blame;
  auto* b = app.add_subcommand("blame", "Attribute GPU idleness to CPU routines");
  b->add_option("db", blame.db, "Database directory")->required();
  b->add_option("--depth", blame.depth, "Routine depth from the outermost (default: leaf)");
  b->add_flag("--global", blame.global, "One scope for all ranks");
  b->add_flag("--json", blame.json, "Emit JSON lines");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Serve the database as read-only JSON over HTTP");
  s->add_option("db", serve.db, "Database directory")->required();
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*r) return cmd_run(run);
    if (*p) return cmd_prof(prof);
    if (*q) return cmd_query(query);
    if (*b) return cmd_blame(blame);
    return cmd_serve(serve);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
