#include "gpuprof/gpucct/gpubin.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "gpuprof/error.hpp"

namespace gpuprof::gpucct {

namespace {

constexpr const char* kStallNames[] = {"none", "mem_dep", "exec_dep", "not_selected",
                                       "inst_fetch", "sync", "other"};

std::uint64_t parse_num(const std::string& s, std::size_t line_no) {
  std::string_view v = s;
  int base = 10;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    v.remove_prefix(2);
    base = 16;
  }
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size())
    throw Error(Errc::ParseError, "bad number '" + s + "'", line_no);
  return out;
}

}  // namespace

const char* stall_name(StallReason r) { return kStallNames[static_cast<int>(r)]; }

std::optional<StallReason> stall_from_name(std::string_view s) {
  for (int i = 0; i < kStallReasonCount; ++i)
    if (s == kStallNames[i]) return static_cast<StallReason>(i);
  return std::nullopt;
}

GpuBinary::GpuBinary(std::string module, std::vector<GpuFunction> functions)
    : module_(std::move(module)), functions_(std::move(functions)) {
  std::set<std::string> names;
  for (std::uint32_t f = 0; f < functions_.size(); ++f) {
    const auto& fn = functions_[f];
    if (!names.insert(fn.name).second) throw Error(Errc::ParseError, "duplicate function " + fn.name);
    if (fn.instructions.empty() || fn.instructions.front().offset != fn.entry)
      throw Error(Errc::ParseError, "function " + fn.name + " must start at its entry");
    for (std::uint32_t i = 0; i < fn.instructions.size(); ++i) {
      const auto& in = fn.instructions[i];
      if (i > 0 && in.offset <= fn.instructions[i - 1].offset)
        throw Error(Errc::ParseError, "instructions of " + fn.name + " not ascending");
      if (in.stall_pct > 100) throw Error(Errc::ParseError, "stall percentage above 100");
      if (in.callee) {
        if (*in.callee >= functions_.size()) throw Error(Errc::ParseError, "undefined callee");
        call_sites_.push_back({in.offset, f, *in.callee});
      }
      by_offset_.emplace_back(in.offset, f, i);
    }
  }
  std::sort(by_offset_.begin(), by_offset_.end());
  for (std::size_t i = 1; i < by_offset_.size(); ++i)
    if (std::get<0>(by_offset_[i]) == std::get<0>(by_offset_[i - 1]))
      throw Error(Errc::ParseError, "duplicate instruction address");
  std::sort(call_sites_.begin(), call_sites_.end(),
            [](const CallSite& a, const CallSite& b) { return a.site < b.site; });
}

std::optional<std::uint32_t> GpuBinary::function_by_name(std::string_view name) const {
  for (std::uint32_t f = 0; f < functions_.size(); ++f)
    if (functions_[f].name == name) return f;
  return std::nullopt;
}

std::optional<std::uint32_t> GpuBinary::function_by_entry(std::uint64_t entry) const {
  for (std::uint32_t f = 0; f < functions_.size(); ++f)
    if (functions_[f].entry == entry) return f;
  return std::nullopt;
}

std::optional<std::pair<std::uint32_t, std::uint32_t>> GpuBinary::locate(std::uint64_t offset) const {
  auto it = std::lower_bound(by_offset_.begin(), by_offset_.end(), offset,
                             [](const auto& t, std::uint64_t off) { return std::get<0>(t) < off; });
  if (it == by_offset_.end() || std::get<0>(*it) != offset) return std::nullopt;
  return std::make_pair(std::get<1>(*it), std::get<2>(*it));
}

std::vector<std::uint32_t> GpuBinary::reachable(std::uint32_t root) const {
  std::vector<bool> seen(functions_.size(), false);
  std::vector<std::uint32_t> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    std::uint32_t f = stack.back();
    stack.pop_back();
    for (const auto& in : functions_[f].instructions)
      if (in.callee && !seen[*in.callee]) {
        seen[*in.callee] = true;
        stack.push_back(*in.callee);
      }
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t f = 0; f < seen.size(); ++f)
    if (seen[f]) out.push_back(f);
  return out;
}

GpuBinary parse_gpubin(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line, module;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<GpuFunction> functions;
  std::vector<std::tuple<std::size_t, std::size_t, std::string, std::size_t>> pending_calls;
  std::uint64_t block = 0;
  bool have_block = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 2 || tok[0] != "gpuprof-gpubin" || tok[1] != "1")
        throw Error(Errc::ParseError, "expected 'gpuprof-gpubin 1' header", line_no);
      header = true;
      continue;
    }
    const std::string& kw = tok[0];
    if (kw == "module") {
      if (tok.size() != 2 || !module.empty()) throw Error(Errc::ParseError, "bad module line", line_no);
      module = tok[1];
    } else if (kw == "function") {
      if (tok.size() < 3 || tok.size() > 4 || (tok.size() == 4 && tok[3] != "kernel"))
        throw Error(Errc::ParseError, "bad function line", line_no);
      GpuFunction fn;
      fn.name = tok[1];
      fn.entry = parse_num(tok[2], line_no);
      fn.kernel = tok.size() == 4;
      functions.push_back(std::move(fn));
      have_block = false;
    } else if (kw == "block") {
      if (tok.size() != 2 || functions.empty()) throw Error(Errc::ParseError, "bad block line", line_no);
      block = parse_num(tok[1], line_no);
      have_block = true;
    } else if (kw == "inst" || kw == "call") {
      if (!have_block) throw Error(Errc::ParseError, "instruction outside a block", line_no);
      std::size_t base = kw == "call" ? 3 : 2;
      if (tok.size() != base && tok.size() != base + 2)
        throw Error(Errc::ParseError, "bad " + kw + " line", line_no);
      GpuInstruction ins;
      ins.offset = parse_num(tok[1], line_no);
      ins.exec_count = block;
      if (tok.size() == base + 2) {
        ins.stall_pct = static_cast<std::uint32_t>(parse_num(tok[base], line_no));
        auto r = stall_from_name(tok[base + 1]);
        if (!r || ins.stall_pct > 100) throw Error(Errc::ParseError, "bad stall annotation", line_no);
        ins.stall = *r;
      }
      auto& fn = functions.back();
      if (kw == "call") pending_calls.emplace_back(functions.size() - 1, fn.instructions.size(), tok[2], line_no);
      fn.instructions.push_back(ins);
    } else {
      throw Error(Errc::ParseError, "unknown keyword '" + kw + "'", line_no);
    }
  }
  if (!header) throw Error(Errc::ParseError, "empty gpubin", line_no);
  if (module.empty()) throw Error(Errc::ParseError, "missing module line", line_no);
  std::map<std::string, std::uint32_t> by_name;
  for (std::uint32_t f = 0; f < functions.size(); ++f) by_name.emplace(functions[f].name, f);
  for (const auto& [f, i, callee, ln] : pending_calls) {
    auto it = by_name.find(callee);
    if (it == by_name.end()) throw Error(Errc::ParseError, "undefined callee " + callee, ln);
    functions[f].instructions[i].callee = it->second;
  }
  return GpuBinary(std::move(module), std::move(functions));
}

std::string write_gpubin(const GpuBinary& bin) {
  std::ostringstream out;
  out << "gpuprof-gpubin 1\nmodule " << bin.module() << '\n';
  for (const auto& fn : bin.functions()) {
    out << "function " << fn.name << " 0x" << std::hex << fn.entry << std::dec
        << (fn.kernel ? " kernel" : "") << '\n';
    bool first = true;
    std::uint64_t block = 0;
    for (const auto& in : fn.instructions) {
      if (first || in.exec_count != block) {
        out << "block " << in.exec_count << '\n';
        block = in.exec_count;
        first = false;
      }
      out << (in.callee ? "call" : "inst") << " 0x" << std::hex << in.offset << std::dec;
      if (in.callee) out << ' ' << bin.functions()[*in.callee].name;
      if (in.stall != StallReason::None || in.stall_pct != 0)
        out << ' ' << in.stall_pct << ' ' << stall_name(in.stall);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace gpuprof::gpucct
