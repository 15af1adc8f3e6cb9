#include "gpuprof/analysis/derived.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "gpuprof/error.hpp"

namespace gpuprof::analysis {

struct DerivedExpr::Node {
  enum class Op { Number, Metric, Add, Sub, Mul, Div, Neg, Min, Max, Sqrt } op = Op::Number;
  double number = 0;
  MetricRef ref;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using Node = DerivedExpr::Node;
using NodePtr = std::shared_ptr<const Node>;

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::ParseError, "expression: " + msg, pos_ + 1);
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  static NodePtr make(Node::Op op, std::vector<NodePtr> args) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->args = std::move(args);
    return n;
  }

  NodePtr expr() {
    NodePtr l = term();
    for (;;) {
      if (eat('+'))
        l = make(Node::Op::Add, {l, term()});
      else if (eat('-'))
        l = make(Node::Op::Sub, {l, term()});
      else
        return l;
    }
  }
  NodePtr term() {
    NodePtr l = unary();
    for (;;) {
      if (eat('*'))
        l = make(Node::Op::Mul, {l, unary()});
      else if (eat('/'))
        l = make(Node::Op::Div, {l, unary()});
      else
        return l;
    }
  }
  NodePtr unary() {
    if (eat('-')) return make(Node::Op::Neg, {unary()});
    if (eat('+')) return unary();
    return primary();
  }
  std::string ident() {
    const std::size_t b = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '.'))
      ++pos_;
    return std::string(s_.substr(b, pos_ - b));
  }
  NodePtr primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t at = pos_;
      std::string name = ident();
      if (!eat('(')) {
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Metric;
        n->ref = {name, true};
        return n;
      }
      if (name == "excl") {
        skip_ws();
        std::string metric = ident();
        if (metric.empty()) fail("excl() takes a metric name");
        if (!eat(')')) fail("expected ')'");
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Metric;
        n->ref = {metric, false};
        return n;
      }
      std::vector<NodePtr> args{expr()};
      while (eat(',')) args.push_back(expr());
      if (!eat(')')) fail("expected ')'");
      if (name == "sqrt") {
        if (args.size() != 1) fail("sqrt() takes one argument");
        return make(Node::Op::Sqrt, std::move(args));
      }
      if (name == "min" || name == "max") return make(name == "min" ? Node::Op::Min : Node::Op::Max, std::move(args));
      pos_ = at;
      fail("unknown function '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
  NodePtr number() {
    const std::size_t b = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    const std::string text(s_.substr(b, pos_ - b));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size()) {
      pos_ = b;
      fail("bad number '" + text + "'");
    }
    auto n = std::make_shared<Node>();
    n->number = v;
    return n;
  }
};

std::optional<double> eval_node(const Node& n, const DerivedExpr::Resolver& value) {
  using Op = Node::Op;
  if (n.op == Op::Number) return n.number;
  if (n.op == Op::Metric) return value(n.ref);
  std::vector<double> a;
  for (const auto& c : n.args) {
    auto v = eval_node(*c, value);
    if (!v) return std::nullopt;
    a.push_back(*v);
  }
  switch (n.op) {
    case Op::Add: return a[0] + a[1];
    case Op::Sub: return a[0] - a[1];
    case Op::Mul: return a[0] * a[1];
    case Op::Div:
      if (a[1] == 0) return std::nullopt;
      return a[0] / a[1];
    case Op::Neg: return -a[0];
    case Op::Min: return *std::min_element(a.begin(), a.end());
    case Op::Max: return *std::max_element(a.begin(), a.end());
    case Op::Sqrt:
      if (a[0] < 0) return std::nullopt;
      return std::sqrt(a[0]);
    default: return std::nullopt;
  }
}

void collect(const Node& n, std::vector<MetricRef>& out) {
  if (n.op == Node::Op::Metric && std::find(out.begin(), out.end(), n.ref) == out.end()) out.push_back(n.ref);
  for (const auto& c : n.args) collect(*c, out);
}

}  // namespace

DerivedExpr DerivedExpr::parse(std::string_view text) {
  DerivedExpr e;
  e.text_ = std::string(text);
  e.root_ = Parser(text).parse();
  return e;
}

std::vector<MetricRef> DerivedExpr::references() const {
  std::vector<MetricRef> out;
  collect(*root_, out);
  return out;
}

std::optional<double> DerivedExpr::eval(const Resolver& value) const {
  auto v = eval_node(*root_, value);
  if (v && !std::isfinite(*v)) return std::nullopt;
  return v;
}

std::map<std::string, double> derived_constants(const Database& db) {
  std::uint64_t lo = UINT64_MAX, hi = 0;
  for (const auto& line : db.traces())
    if (!line.records.empty()) {
      lo = std::min(lo, line.records.front().timestamp);
      hi = std::max(hi, line.records.back().timestamp);
    }
  double streams = 0;
  for (const auto& p : db.meta().profiles) streams += p.id.is_gpu() ? 1 : 0;
  return {{"trace_span", lo <= hi ? static_cast<double>(hi - lo) : 0.0},
          {"gpu_streams", streams},
          {"profiles", static_cast<double>(db.meta().profiles.size())}};
}

std::vector<std::optional<double>> eval_derived(const Database& db, const DerivedExpr& expr) {
  const auto constants = derived_constants(db);
  std::map<std::pair<std::string, bool>, DbMetricId> ids;
  for (const auto& r : expr.references()) {
    if (r.inclusive && constants.count(r.name)) continue;
    ids[{r.name, r.inclusive}] = db.metric(r.name, r.inclusive).id;
  }
  std::vector<std::optional<double>> out(db.tree().size());
  for (ContextId c = 0; c < db.tree().size(); ++c)
    out[c] = expr.eval([&](const MetricRef& r) {
      if (r.inclusive)
        if (auto it = constants.find(r.name); it != constants.end()) return it->second;
      return static_cast<double>(db.sum(c, ids.at({r.name, r.inclusive})));
    });
  return out;
}

const std::map<std::string, std::string>& derived_presets() {
  static const std::map<std::string, std::string> presets = {
      {"warp_issue_rate", "(gpu_inst_samples - gpu_stall_samples) / gpu_inst_samples"},
      {"registers_per_kernel", "gpu_kernel_reg_sum / gpu_kernel_count"},
      {"shmem_per_kernel", "gpu_kernel_shmem_sum / gpu_kernel_count"},
      {"gpu_utilization", "gpu_kernel_time / (trace_span * gpu_streams)"},
      // 64K registers and 2048 resident threads per multiprocessor.
      {"gpu_occupancy_regs", "min(1, 32 / (gpu_kernel_reg_sum / gpu_kernel_count))"},
  };
  return presets;
}

std::pair<std::string, DerivedExpr> parse_definition(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw Error(Errc::ParseError, "expected name=expression", 1);
  std::string name(text.substr(0, eq));
  name.erase(0, name.find_first_not_of(" \t"));
  name.erase(name.find_last_not_of(" \t") + 1);
  if (name.empty()) throw Error(Errc::ParseError, "derived metric needs a name", 1);
  return {name, DerivedExpr::parse(text.substr(eq + 1))};
}

}  // namespace gpuprof::analysis
