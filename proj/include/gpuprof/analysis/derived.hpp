#pragma once

// Spreadsheet-like derived metrics: + - * /, unary minus, parentheses,
// numeric constants and the functions min, max, sqrt and excl. A bare
// metric name denotes its inclusive value; excl(name) the exclusive one.
// Evaluation runs on aggregated sums. A zero divisor or the square root of
// a negative number makes the result undefined.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpuprof/analysis/database.hpp"

namespace gpuprof::analysis {

struct MetricRef {
  std::string name;
  bool inclusive = true;
  bool operator==(const MetricRef&) const = default;
};

class DerivedExpr {
 public:
  /// Throws ParseError; the position is the 1-based column.
  static DerivedExpr parse(std::string_view text);

  const std::string& text() const { return text_; }
  /// Referenced names in first-use order, without duplicates.
  std::vector<MetricRef> references() const;

  using Resolver = std::function<double(const MetricRef&)>;
  std::optional<double> eval(const Resolver& value) const;

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

/// Database-wide constants usable in expressions: trace_span (ns covered by
/// all trace lines), gpu_streams and profiles.
std::map<std::string, double> derived_constants(const Database& db);

/// Value of the expression at every context. Throws UnknownMetric for
/// names that are neither metrics nor constants.
std::vector<std::optional<double>> eval_derived(const Database& db, const DerivedExpr& expr);

/// Editable predefined formulas by name.
const std::map<std::string, std::string>& derived_presets();

/// Splits "name=expression"; throws ParseError without '='.
std::pair<std::string, DerivedExpr> parse_definition(std::string_view text);

}  // namespace gpuprof::analysis
