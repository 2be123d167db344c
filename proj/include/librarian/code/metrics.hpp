#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "librarian/code/ast.hpp"

namespace librarian::code {

struct FunctionInfo {
  std::string name;
  std::size_t line = 0;
  std::size_t end_line = 0;
  std::int64_t decision_points = 0;
};

/// A top-level `def` or `class`, with its span including decorators.
struct Definition {
  std::string name;
  bool is_class = false;
  std::size_t line = 0;
  std::size_t end_line = 0;
};

/// Operator/operand tallies under the Halstead classification table.
struct HalsteadCounts {
  std::int64_t operators_total = 0;
  std::int64_t operands_total = 0;
  std::int64_t operators_distinct = 0;
  std::int64_t operands_distinct = 0;

  double volume() const;
};

struct AstSummary {
  std::vector<FunctionInfo> functions;
  std::vector<Definition> definitions;
  /// Multiset of callee names: `f(...)` records "f", `a.b.f(...)` records "a.b.f".
  std::map<std::string, std::int64_t> call_sites;
  HalsteadCounts halstead;
  std::size_t sloc = 0;
  std::size_t physical_lines = 0;
  /// Statements other than def/class/import/bare string at module or class-body level.
  bool module_level_code = false;
  std::int64_t module_decision_points = 0;
};

/// How one lexical category counts for Halstead.
enum class HalsteadClass { operator_, operand, ignore };

/// Category → class table. Keys are `name`, `number`, `string`, `keyword`,
/// `keyword:<kw>`, `op`, `op:<symbol>`; the specific key wins over the generic.
class HalsteadTable {
 public:
  /// The table committed with the library (data/halstead_table.txt).
  static const HalsteadTable& builtin();
  static HalsteadTable parse(std::string_view text);
  static HalsteadTable load(const std::filesystem::path& path);

  int version() const noexcept { return version_; }
  HalsteadClass classify(const Token& token) const;

 private:
  int version_ = 0;
  std::map<std::string, HalsteadClass, std::less<>> entries_;
};

/// Tally over significant tokens (no comments, newlines, indents).
HalsteadCounts count_halstead(std::span<const Token> tokens, const HalsteadTable& table);

/// Parses `source` and derives every AST quantity. Throws ParseError.
AstSummary parse(std::string_view source);
AstSummary summarize(const ParsedModule& module);

/// Sum over functions of (1 + decision points), plus one component for module-level code.
std::int64_t cyclomatic_complexity(std::string_view source);
std::int64_t cyclomatic_complexity(const AstSummary& summary);

double halstead_volume(std::string_view source);

/// max(0, 100 (171 - 5.2 ln V - 0.23 CC - 16.2 ln SLOC) / 171), logs clamped at 1.
double maintainability_index(double volume, std::int64_t cc, std::size_t sloc);
double maintainability_index(std::string_view source);
double maintainability_index(const AstSummary& summary);

struct UsageStats {
  std::int64_t num_definitions = 0;
  std::map<std::string, std::int64_t> calls_per_definition;
  double avg_calls = 0.0;
  double single_use_fraction = 0.0;
  std::int64_t unused_count = 0;
};

/// Counts direct calls/instantiations of the library's top-level names inside
/// the rewritten sources (calls inside the library itself are excluded).
/// `codebank.<name>(...)` also counts. Throws ParseError.
UsageStats usage_stats(std::string_view library, std::span<const std::string> rewritten);

}  // namespace librarian::code
