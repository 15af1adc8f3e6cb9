#pragma once

// Program structure for one load module: functions, inlined frames, loops
// and source lines with nested address ranges. Text, one record per line;
// see FORMATS.md.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gpuprof::formats {

enum class ScopeKind : std::uint8_t { Function = 0, Loop = 1, Inline = 2, Line = 3 };

char scope_letter(ScopeKind k);
const char* scope_name(ScopeKind k);

struct StructRecord {
  std::uint32_t id = 0;      // > 0, unique in the file
  ScopeKind kind = ScopeKind::Function;
  std::uint32_t parent = 0;  // 0 means the module itself
  std::uint64_t lo = 0;      // [lo, hi)
  std::uint64_t hi = 0;
  std::string name;
  std::string file;
  std::uint32_t line = 0;

  bool operator==(const StructRecord&) const = default;
};

class StructureFile {
 public:
  StructureFile() = default;
  /// Validates nesting; throws NestingViolation or ParseError.
  StructureFile(std::string module, std::vector<StructRecord> records);

  const std::string& module() const { return module_; }
  const std::vector<StructRecord>& records() const { return records_; }
  const StructRecord* find(std::uint32_t id) const;

  /// Records containing `offset`, innermost first. Empty when nothing
  /// matches; callers then use an unknown function spanning the module.
  std::vector<const StructRecord*> resolve(std::uint64_t offset) const;

  bool operator==(const StructureFile& o) const {
    return module_ == o.module_ && records_ == o.records_;
  }

 private:
  std::string module_;
  std::vector<StructRecord> records_;
  std::map<std::uint32_t, std::size_t> by_id_;
  // Child record indices per parent id, ascending by lo.
  std::map<std::uint32_t, std::vector<std::size_t>> children_;
};

/// Throws ParseError (with 1-based line number) or NestingViolation.
StructureFile parse_structure(std::string_view text);
std::string write_structure(const StructureFile& file);

/// Structure files of a directory keyed by module path. Files are named
/// `<module>.struct`; a missing directory yields an empty set.
std::map<std::string, StructureFile> load_structure_dir(const std::string& dir);

}  // namespace gpuprof::formats
