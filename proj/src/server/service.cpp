#include "gpuprof/server/service.hpp"

#include <httplib.h>

#include <charconv>
#include <json.hpp>
#include <regex>

#include "gpuprof/analysis/derived.hpp"
#include "gpuprof/analysis/trace_analysis.hpp"
#include "gpuprof/analysis/views.hpp"
#include "gpuprof/error.hpp"

namespace gpuprof::server {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

std::optional<std::string> param(const Params& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) return std::nullopt;
  return it->second;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw HttpError{400, "bad " + what + " '" + s + "'"};
  return v;
}

std::uint64_t u64_param(const Params& p, const std::string& key, std::uint64_t fallback) {
  auto v = param(p, key);
  return v ? parse_u64(*v, key) : fallback;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t b = 0;
  while (b <= s.size()) {
    auto e = s.find(',', b);
    if (e == std::string::npos) e = s.size();
    if (e > b) out.push_back(s.substr(b, e - b));
    b = e + 1;
  }
  return out;
}

json id_json(const ProfileIdTuple& id) {
  json j{{"kind", id.is_gpu() ? "gpu_stream" : "cpu_thread"}, {"node", id.node}, {"rank", id.rank}};
  if (id.is_gpu()) {
    j["device"] = id.device_id;
    j["stream"] = id.stream_id;
  } else {
    j["thread"] = id.thread_id;
  }
  j["name"] = id.to_string();
  return j;
}

json stats_json(const std::optional<aggregator::Stats>& s) {
  if (!s) return nullptr;
  return {{"n", s->n},     {"sum", s->sum},       {"min", s->min}, {"max", s->max},
          {"mean", s->mean}, {"stddev", s->stddev}, {"cv", s->cv}};
}

ContextId context_id(const analysis::Database& db, const std::string& s) {
  const auto v = parse_u64(s, "context id");
  if (v >= db.tree().size()) throw HttpError{404, "no context " + s};
  return static_cast<ContextId>(v);
}

std::vector<std::string> metric_list(const analysis::Database& db, const Params& p) {
  auto v = param(p, "metrics");
  if (!v) v = param(p, "metric");
  std::vector<std::string> names = v ? split(*v) : std::vector<std::string>{};
  if (names.empty()) names.push_back(db.meta().metrics.at(0).name);
  return names;
}

json rows_json(const analysis::Database& db, ContextId parent, const std::vector<std::string>& metrics) {
  json rows = json::array();
  for (const auto& r : analysis::view_topdown(db, parent, metrics)) {
    json inc, exc, st;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      inc[metrics[i]] = r.inclusive[i];
      exc[metrics[i]] = r.exclusive[i];
      st[metrics[i]] = stats_json(db.stats(r.context, db.metric(metrics[i], true).id));
    }
    rows.push_back({{"id", r.context},
                    {"label", r.label},
                    {"kind", context_kind_name(r.kind)},
                    {"has_children", r.has_children},
                    {"inclusive", inc},
                    {"exclusive", exc},
                    {"stats", st}});
  }
  return {{"context", parent}, {"label", db.label(parent)}, {"metrics", metrics}, {"children", rows}};
}

json bottomup_json(const std::vector<analysis::BottomUpRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back({{"caller", r.label}, {"cost", r.cost}, {"callers", bottomup_json(r.callers)}});
  return out;
}

json meta_json(const analysis::Database& db) {
  const auto& m = db.meta();
  json j;
  json mods = json::array();
  for (const auto& x : m.modules) mods.push_back({{"id", x.id}, {"path", x.path}});
  json profs = json::array();
  for (std::size_t i = 0; i < m.profiles.size(); ++i)
    profs.push_back({{"index", i}, {"id", id_json(m.profiles[i].id)}, {"trace", m.profiles[i].trace.has_value()}});
  json mets = json::array();
  for (const auto& x : m.metrics)
    mets.push_back({{"id", x.id}, {"name", x.name}, {"scope", x.inclusive ? "inclusive" : "exclusive"}});
  j["modules"] = mods;
  j["profiles"] = profs;
  j["metrics"] = mets;
  j["contexts"] = m.contexts.size();
  j["root"] = 0;
  j["presets"] = analysis::derived_presets();
  j["constants"] = analysis::derived_constants(db);
  std::uint64_t lo = UINT64_MAX, hi = 0;
  for (const auto& l : db.traces())
    if (!l.records.empty()) {
      lo = std::min(lo, l.records.front().timestamp);
      hi = std::max(hi, l.records.back().timestamp);
    }
  j["trace_range"] = lo <= hi ? json{lo, hi} : json(nullptr);
  return j;
}

json trace_lines_json(const analysis::Database& db, const Params& p) {
  std::uint64_t lo = UINT64_MAX, hi = 0;
  for (const auto& l : db.traces())
    if (!l.records.empty()) {
      lo = std::min(lo, l.records.front().timestamp);
      hi = std::max(hi, l.records.back().timestamp);
    }
  if (lo > hi) lo = hi = 0;
  const auto t0 = u64_param(p, "t0", lo);
  const auto t1 = u64_param(p, "t1", hi + 1);
  const auto depth = u64_param(p, "depth", 0);
  const auto pixels = u64_param(p, "pixels", 1000);
  if (t1 <= t0) throw HttpError{400, "t1 must exceed t0"};
  if (pixels == 0 || pixels > 100000) throw HttpError{400, "pixels must be in [1, 100000]"};
  json lines = json::array();
  std::map<ContextId, std::string> frames;
  for (const auto& l : analysis::sample_trace_lines(db, t0, t1, depth, pixels)) {
    json segs = json::array();
    for (const auto& s : l.segments) {
      segs.push_back({s.begin, s.end, s.frame});
      if (!frames.count(s.frame)) frames[s.frame] = s.frame == 0 ? analysis::kIdleLabel : db.label(s.frame);
    }
    lines.push_back({{"profile", l.profile}, {"id", id_json(l.id)}, {"segments", segs}});
  }
  json fr = json::object();
  for (const auto& [id, name] : frames) fr[std::to_string(id)] = name;
  return {{"t0", t0}, {"t1", t1}, {"depth", depth}, {"pixels", pixels}, {"lines", lines}, {"frames", fr}};
}

json blame_json(const analysis::Database& db, const Params& p) {
  analysis::BlameOptions opt;
  if (auto d = param(p, "depth")) opt.depth = parse_u64(*d, "depth");
  if (auto s = param(p, "scope")) {
    if (*s != "rank" && *s != "global") throw HttpError{400, "scope must be rank or global"};
    opt.per_rank = *s == "rank";
  }
  const auto r = analysis::blame_idleness(db, opt);
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"routine", e.routine},
                       {"blamed_ns", static_cast<double>(e.blamed)},
                       {"blamed_exact", e.blamed.str()},
                       {"share", e.share}});
  return {{"total_ns", static_cast<double>(r.total)}, {"total_exact", r.total.str()}, {"entries", entries}};
}

json derive_json(const analysis::Database& db, const std::string& body) {
  std::string text = body;
  try {
    const json j = json::parse(body);
    if (j.is_object() && j.contains("expr")) text = j.at("expr").get<std::string>();
  } catch (const json::exception&) {
    // Plain-text body.
  }
  analysis::DerivedExpr expr = analysis::DerivedExpr::parse(text);
  const auto values = analysis::eval_derived(db, expr);
  json vals = json::array();
  for (std::size_t c = 0; c < values.size(); ++c) vals.push_back(values[c] ? json(*values[c]) : json(nullptr));
  return {{"expr", expr.text()}, {"values", vals}};
}

Response dispatch(const analysis::Database& db, const std::string& method, const std::string& path,
                  const Params& p, const std::string& body) {
  static const std::regex children_re(R"(^/context/([^/]+)/children$)");
  static const std::regex view_re(R"(^/view/([^/]+)$)");
  static const std::regex plot_re(R"(^/plot/([^/]+)/([^/]+)$)");
  std::smatch m;
  if (method == "POST") {
    if (path == "/derive") return {200, derive_json(db, body).dump()};
    throw HttpError{404, "no such endpoint"};
  }
  if (method != "GET") throw HttpError{405, "method not allowed"};
  if (path == "/meta") return {200, meta_json(db).dump()};
  if (std::regex_match(path, m, children_re))
    return {200, rows_json(db, context_id(db, m[1]), metric_list(db, p)).dump()};
  if (std::regex_match(path, m, view_re)) {
    const std::string kind = m[1];
    if (kind == "topdown") {
      const ContextId c = param(p, "context") ? context_id(db, *param(p, "context")) : 0;
      return {200, rows_json(db, c, metric_list(db, p)).dump()};
    }
    const std::string metric = metric_list(db, p).front();
    if (kind == "flat") {
      json rows = json::array();
      for (const auto& r : analysis::view_flat(db, metric))
        rows.push_back({{"routine", r.label},
                        {"module", r.module},
                        {"exclusive", r.exclusive},
                        {"inclusive", r.inclusive},
                        {"instances", r.instances}});
      return {200, json{{"metric", metric}, {"rows", rows}}.dump()};
    }
    if (kind == "bottomup") {
      auto fn = param(p, "function");
      if (!fn) throw HttpError{400, "bottomup needs function="};
      return {200, json{{"metric", metric}, {"function", *fn}, {"callers", bottomup_json(analysis::view_bottomup(db, *fn, metric))}}.dump()};
    }
    throw HttpError{404, "no view '" + kind + "'"};
  }
  if (std::regex_match(path, m, plot_re)) {
    const ContextId c = context_id(db, m[1]);
    const std::string ms = m[2];
    formats::DbMetricId mid = 0;
    if (!ms.empty() && std::all_of(ms.begin(), ms.end(), ::isdigit)) {
      const auto v = parse_u64(ms, "metric id");
      if (v >= db.meta().metrics.size()) throw HttpError{404, "no metric " + ms};
      mid = static_cast<formats::DbMetricId>(v);
    } else {
      mid = db.metric(ms, true).id;
    }
    json pts = json::array();
    for (const auto& pt : analysis::plot_thread_metric(db, c, mid))
      pts.push_back({{"profile", pt.profile}, {"id", id_json(pt.id)}, {"value", pt.value}});
    return {200, json{{"context", c}, {"metric", mid}, {"points", pts}}.dump()};
  }
  if (path == "/trace/lines") return {200, trace_lines_json(db, p).dump()};
  if (path == "/trace/stats") {
    json rows = json::array();
    for (const auto& s : analysis::trace_area_stats(db, u64_param(p, "depth", 0)))
      rows.push_back({{"name", s.name}, {"ns", s.ns}, {"fraction", s.fraction}});
    return {200, json{{"depth", u64_param(p, "depth", 0)}, {"rows", rows}}.dump()};
  }
  if (path == "/blame") return {200, blame_json(db, p).dump()};
  throw HttpError{404, "no such endpoint"};
}

}  // namespace

Response Service::handle(const std::string& method, const std::string& path, const Params& params,
                         const std::string& body) const {
  auto error = [](int status, const std::string& msg) { return Response{status, json{{"error", msg}}.dump()}; };
  try {
    return dispatch(db_, method, path, params, body);
  } catch (const HttpError& e) {
    return error(e.status, e.message);
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::UnknownContext:
      case Errc::UnknownMetric:
      case Errc::UnknownProfile:
      case Errc::UnknownFunction: return error(path == "/derive" ? 400 : 404, e.what());
      case Errc::ParseError:
      case Errc::ConfigError:
      case Errc::NoGpuLines: return error(400, e.what());
      default: return error(500, e.what());
    }
  }
}

void Service::mount(httplib::Server& server) const {
  auto run = [this](const httplib::Request& req, httplib::Response& res) {
    Params p(req.params.begin(), req.params.end());
    Response r = handle(req.method, req.path, p, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(R"(/.*)", run);
  server.Post(R"(/.*)", run);
  server.Put(R"(/.*)", run);
  server.Patch(R"(/.*)", run);
  server.Delete(R"(/.*)", run);
}

}  // namespace gpuprof::server
