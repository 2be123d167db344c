#include "librarian/code/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "halstead_table_data.hpp"
#include "librarian/errors.hpp"

namespace librarian::code {

double HalsteadCounts::volume() const {
  const std::int64_t n_total = operators_total + operands_total;
  const std::int64_t vocabulary = operators_distinct + operands_distinct;
  if (n_total == 0 || vocabulary == 0) return 0.0;
  return static_cast<double>(n_total) * std::log2(static_cast<double>(vocabulary));
}

const HalsteadTable& HalsteadTable::builtin() {
  static const HalsteadTable table = parse(kHalsteadTableText);
  return table;
}

HalsteadTable HalsteadTable::parse(std::string_view text) {
  HalsteadTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash == 0) continue;
    std::istringstream fields(line);
    std::string key, cls;
    if (!(fields >> key)) continue;
    if (!(fields >> cls)) throw Error("halstead table line " + std::to_string(lineno) + ": missing class");
    if (key == "version") {
      table.version_ = std::stoi(cls);
      continue;
    }
    HalsteadClass c;
    if (cls == "operator") {
      c = HalsteadClass::operator_;
    } else if (cls == "operand") {
      c = HalsteadClass::operand;
    } else if (cls == "ignore") {
      c = HalsteadClass::ignore;
    } else {
      throw Error("halstead table line " + std::to_string(lineno) + ": unknown class '" + cls + "'");
    }
    table.entries_[key] = c;
  }
  if (table.version_ == 0) throw Error("halstead table: missing version line");
  return table;
}

HalsteadTable HalsteadTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read halstead table " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

HalsteadClass HalsteadTable::classify(const Token& token) const {
  std::string generic;
  switch (token.kind) {
    case TokenKind::name: generic = is_keyword(token.text) ? "keyword" : "name"; break;
    case TokenKind::number: generic = "number"; break;
    case TokenKind::string: generic = "string"; break;
    case TokenKind::op: generic = "op"; break;
    default: return HalsteadClass::ignore;
  }
  if (generic == "keyword" || generic == "op") {
    if (auto it = entries_.find(generic + ":" + token.text); it != entries_.end()) return it->second;
  }
  if (auto it = entries_.find(generic); it != entries_.end()) return it->second;
  return HalsteadClass::ignore;
}

HalsteadCounts count_halstead(std::span<const Token> tokens, const HalsteadTable& table) {
  HalsteadCounts counts;
  std::set<std::string> operators;
  std::set<std::pair<TokenKind, std::string>> operands;
  for (const auto& t : tokens) {
    switch (table.classify(t)) {
      case HalsteadClass::operator_:
        ++counts.operators_total;
        operators.insert(t.text);
        break;
      case HalsteadClass::operand:
        ++counts.operands_total;
        operands.emplace(t.kind, t.text);
        break;
      case HalsteadClass::ignore: break;
    }
  }
  counts.operators_distinct = static_cast<std::int64_t>(operators.size());
  counts.operands_distinct = static_cast<std::int64_t>(operands.size());
  return counts;
}

namespace {

std::string callee_name(const Node& func) {
  if (func.kind == NodeKind::name) return func.text;
  if (func.kind == NodeKind::attribute && !func.children.empty()) {
    std::string base = callee_name(func.children[0]);
    if (base.empty()) return {};
    return base + "." + func.text;
  }
  return {};
}

// Docstrings and other string-only statements.
bool is_bare_string(const Node& stmt) {
  if (stmt.has(flag_docstring)) return true;
  if (stmt.children.size() != 1 || stmt.children[0].kind != NodeKind::constant) return false;
  const std::string& text = stmt.children[0].text;
  return !text.empty() && (text.back() == '"' || text.back() == '\'');
}

bool is_module_level_code(const Node& stmt) {
  switch (stmt.kind) {
    case NodeKind::function_def:
    case NodeKind::class_def:
    case NodeKind::import_stmt:
    case NodeKind::import_from: return false;
    case NodeKind::expr_stmt: return !is_bare_string(stmt);
    default: return true;
  }
}

class SummaryBuilder {
 public:
  explicit SummaryBuilder(AstSummary& out) : out_(out) {}

  void module(const Node& root) {
    for (const auto& stmt : root.children) {
      if (stmt.kind == NodeKind::function_def || stmt.kind == NodeKind::class_def) {
        std::size_t first = stmt.line;
        out_.definitions.push_back({stmt.text, stmt.kind == NodeKind::class_def, first, stmt.end_line});
      }
    }
    statements(root.children, -1);
  }

 private:
  AstSummary& out_;

  void add_decisions(int fn, std::int64_t n) {
    if (fn < 0) {
      out_.module_decision_points += n;
    } else {
      out_.functions[static_cast<std::size_t>(fn)].decision_points += n;
    }
  }

  // Statements directly in a module or class body (fn < 0) or a function body.
  void statements(const std::vector<Node>& body, int fn) {
    for (const auto& s : body) {
      if (fn < 0 && is_module_level_code(s)) out_.module_level_code = true;
      visit(s, fn);
    }
  }

  void visit(const Node& n, int fn) {
    switch (n.kind) {
      case NodeKind::function_def: {
        // Decorators, defaults and annotations run in the enclosing scope.
        for (std::size_t i = 0; i + 1 < n.children.size(); ++i) visit(n.children[i], fn);
        out_.functions.push_back({n.text, n.line, n.end_line, 0});
        int self = static_cast<int>(out_.functions.size()) - 1;
        visit_block(n.children.back(), self);
        return;
      }
      case NodeKind::class_def: {
        for (std::size_t i = 0; i + 1 < n.children.size(); ++i) visit(n.children[i], fn);
        visit_block(n.children.back(), fn);
        return;
      }
      case NodeKind::block: visit_block(n, fn); return;
      case NodeKind::if_stmt:
      case NodeKind::for_stmt:
      case NodeKind::while_stmt:
      case NodeKind::except_handler:
      case NodeKind::if_exp:
      case NodeKind::comp_for:
      case NodeKind::comp_if: add_decisions(fn, 1); break;
      case NodeKind::bool_op: add_decisions(fn, static_cast<std::int64_t>(n.children.size()) - 1); break;
      case NodeKind::match_case:
        add_decisions(fn, (n.has(flag_wildcard) ? 0 : 1) + (n.has(flag_guard) ? 1 : 0));
        break;
      case NodeKind::call: {
        std::string name = callee_name(n.children.front());
        if (!name.empty()) ++out_.call_sites[name];
        break;
      }
      default: break;
    }
    for (const auto& c : n.children) visit(c, fn);
  }

  void visit_block(const Node& block, int fn) {
    if (fn < 0) {
      statements(block.children, fn);
    } else {
      for (const auto& s : block.children) visit(s, fn);
    }
  }
};

std::size_t count_sloc(std::span<const Token> tokens) {
  std::set<std::size_t> lines;
  for (const auto& t : tokens) {
    switch (t.kind) {
      case TokenKind::name:
      case TokenKind::number:
      case TokenKind::string:
      case TokenKind::op:
        for (std::size_t l = t.line; l <= t.end_line; ++l) lines.insert(l);
        break;
      default: break;
    }
  }
  return lines.size();
}

}  // namespace

AstSummary summarize(const ParsedModule& module) {
  AstSummary s;
  SummaryBuilder(s).module(module.root);
  s.halstead = count_halstead(module.tokens, HalsteadTable::builtin());
  s.sloc = count_sloc(module.tokens);
  s.physical_lines = module.physical_lines;
  return s;
}

AstSummary parse(std::string_view source) { return summarize(parse_module(source)); }

std::int64_t cyclomatic_complexity(const AstSummary& summary) {
  std::int64_t cc = 0;
  for (const auto& f : summary.functions) cc += 1 + f.decision_points;
  if (summary.module_level_code || summary.module_decision_points > 0) {
    cc += 1 + summary.module_decision_points;
  }
  return cc;
}

std::int64_t cyclomatic_complexity(std::string_view source) { return cyclomatic_complexity(parse(source)); }

double halstead_volume(std::string_view source) { return parse(source).halstead.volume(); }

double maintainability_index(double volume, std::int64_t cc, std::size_t sloc) {
  const double v = std::max(volume, 1.0);
  const double l = std::max(static_cast<double>(sloc), 1.0);
  const double raw = 171.0 - 5.2 * std::log(v) - 0.23 * static_cast<double>(cc) - 16.2 * std::log(l);
  return std::max(0.0, 100.0 * raw / 171.0);
}

double maintainability_index(const AstSummary& summary) {
  return maintainability_index(summary.halstead.volume(), cyclomatic_complexity(summary), summary.sloc);
}

double maintainability_index(std::string_view source) { return maintainability_index(parse(source)); }

UsageStats usage_stats(std::string_view library, std::span<const std::string> rewritten) {
  const AstSummary lib = parse(library);
  UsageStats stats;
  for (const auto& d : lib.definitions) stats.calls_per_definition.emplace(d.name, 0);
  stats.num_definitions = static_cast<std::int64_t>(stats.calls_per_definition.size());
  for (const auto& src : rewritten) {
    const AstSummary s = parse(src);
    for (auto& [name, count] : stats.calls_per_definition) {
      if (auto it = s.call_sites.find(name); it != s.call_sites.end()) count += it->second;
      if (auto it = s.call_sites.find("codebank." + name); it != s.call_sites.end()) count += it->second;
    }
  }
  if (stats.num_definitions == 0) return stats;
  std::int64_t total = 0, single = 0;
  for (const auto& [name, count] : stats.calls_per_definition) {
    total += count;
    if (count == 1) ++single;
    if (count == 0) ++stats.unused_count;
  }
  stats.avg_calls = static_cast<double>(total) / static_cast<double>(stats.num_definitions);
  stats.single_use_fraction = static_cast<double>(single) / static_cast<double>(stats.num_definitions);
  return stats;
}

}  // namespace librarian::code
