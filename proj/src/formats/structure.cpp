#include "gpuprof/formats/structure.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpuprof/error.hpp"

namespace gpuprof::formats {

char scope_letter(ScopeKind k) {
  switch (k) {
    case ScopeKind::Function: return 'F';
    case ScopeKind::Loop: return 'L';
    case ScopeKind::Inline: return 'I';
    case ScopeKind::Line: return 'S';
  }
  return '?';
}

const char* scope_name(ScopeKind k) {
  switch (k) {
    case ScopeKind::Function: return "function";
    case ScopeKind::Loop: return "loop";
    case ScopeKind::Inline: return "inline";
    case ScopeKind::Line: return "line";
  }
  return "?";
}

StructureFile::StructureFile(std::string module, std::vector<StructRecord> records)
    : module_(std::move(module)), records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.id == 0) throw Error(Errc::ParseError, "record id 0 is reserved");
    if (!by_id_.emplace(r.id, i).second)
      throw Error(Errc::ParseError, "duplicate record id " + std::to_string(r.id));
    if (r.lo >= r.hi) throw Error(Errc::NestingViolation, "empty range in record " + std::to_string(r.id));
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.parent == 0) {
      if (r.kind != ScopeKind::Function)
        throw Error(Errc::NestingViolation, "top-level record " + std::to_string(r.id) + " is not a function");
    } else {
      const StructRecord* p = find(r.parent);
      if (!p) throw Error(Errc::ParseError, "unknown parent of record " + std::to_string(r.id));
      if (r.kind == ScopeKind::Function || p->kind == ScopeKind::Line)
        throw Error(Errc::NestingViolation, "record " + std::to_string(r.id) + " cannot nest there");
      if (r.lo < p->lo || r.hi > p->hi)
        throw Error(Errc::NestingViolation, "record " + std::to_string(r.id) + " escapes its parent");
    }
    children_[r.parent].push_back(i);
  }
  // Parent chains must be acyclic; every chain must reach the module.
  for (const auto& r : records_) {
    std::uint32_t at = r.parent;
    for (std::size_t steps = 0; at != 0; ++steps) {
      if (steps > records_.size())
        throw Error(Errc::NestingViolation, "cyclic parents at record " + std::to_string(r.id));
      at = find(at)->parent;
    }
  }
  for (auto& [parent, kids] : children_) {
    std::sort(kids.begin(), kids.end(),
              [&](std::size_t a, std::size_t b) { return records_[a].lo < records_[b].lo; });
    for (std::size_t i = 1; i < kids.size(); ++i)
      if (records_[kids[i]].lo < records_[kids[i - 1]].hi)
        throw Error(Errc::NestingViolation,
                    "records " + std::to_string(records_[kids[i - 1]].id) + " and " +
                        std::to_string(records_[kids[i]].id) + " overlap");
  }
}

const StructRecord* StructureFile::find(std::uint32_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::vector<const StructRecord*> StructureFile::resolve(std::uint64_t offset) const {
  std::vector<const StructRecord*> chain;
  std::uint32_t parent = 0;
  for (;;) {
    auto it = children_.find(parent);
    if (it == children_.end()) break;
    const auto& kids = it->second;
    auto pos = std::upper_bound(kids.begin(), kids.end(), offset,
                                [&](std::uint64_t off, std::size_t k) { return off < records_[k].lo; });
    if (pos == kids.begin()) break;
    const StructRecord& r = records_[*(pos - 1)];
    if (offset >= r.hi) break;
    chain.push_back(&r);
    parent = r.id;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view s, std::size_t line_no) {
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw Error(Errc::ParseError, "bad number '" + std::string(s) + "'", line_no);
  return v;
}

}  // namespace

StructureFile parse_structure(std::string_view text) {
  std::string module;
  bool header = false;
  std::vector<StructRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "gpuprof-structure 1")
        throw Error(Errc::ParseError, "expected 'gpuprof-structure 1' header", line_no);
      header = true;
      continue;
    }
    auto f = split_tabs(line);
    if (f[0] == "module") {
      if (f.size() != 2 || f[1].empty() || !module.empty())
        throw Error(Errc::ParseError, "bad module line", line_no);
      module = std::string(f[1]);
      continue;
    }
    if (module.empty()) throw Error(Errc::ParseError, "record before module line", line_no);
    if (f.size() != 8) throw Error(Errc::ParseError, "expected 8 tab-separated fields", line_no);
    StructRecord r;
    r.id = static_cast<std::uint32_t>(parse_u64(f[0], line_no));
    if (f[1].size() != 1) throw Error(Errc::ParseError, "bad record kind", line_no);
    switch (f[1][0]) {
      case 'F': r.kind = ScopeKind::Function; break;
      case 'L': r.kind = ScopeKind::Loop; break;
      case 'I': r.kind = ScopeKind::Inline; break;
      case 'S': r.kind = ScopeKind::Line; break;
      default: throw Error(Errc::ParseError, "bad record kind", line_no);
    }
    r.parent = static_cast<std::uint32_t>(parse_u64(f[2], line_no));
    r.lo = parse_u64(f[3], line_no);
    r.hi = parse_u64(f[4], line_no);
    r.name = std::string(f[5]);
    r.file = std::string(f[6]);
    r.line = static_cast<std::uint32_t>(parse_u64(f[7], line_no));
    records.push_back(std::move(r));
  }
  if (!header) throw Error(Errc::ParseError, "empty structure file", line_no);
  if (module.empty()) throw Error(Errc::ParseError, "missing module line", line_no);
  return StructureFile(std::move(module), std::move(records));
}

std::string write_structure(const StructureFile& file) {
  std::ostringstream out;
  out << "gpuprof-structure 1\nmodule\t" << file.module() << '\n';
  for (const auto& r : file.records()) {
    out << r.id << '\t' << scope_letter(r.kind) << '\t' << r.parent << "\t0x" << std::hex << r.lo
        << "\t0x" << r.hi << std::dec << '\t' << r.name << '\t' << r.file << '\t' << r.line << '\n';
  }
  return out.str();
}

std::map<std::string, StructureFile> load_structure_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, StructureFile> out;
  std::error_code ec;
  if (dir.empty() || !fs::is_directory(dir, ec)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".struct") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
    StructureFile sf = parse_structure(ss.str());
    std::string name = sf.module();
    out.insert_or_assign(name, std::move(sf));
  }
  return out;
}

}  // namespace gpuprof::formats
