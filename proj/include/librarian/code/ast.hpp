#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "librarian/code/lexer.hpp"

namespace librarian::code {

enum class NodeKind : std::uint8_t {
  // statements
  module,
  function_def,  // text: name; children: decorators..., arguments, [returns], block
  class_def,     // text: name; children: decorators..., bases/keywords..., block
  block,         // text: "body" | "else" | "finally"
  if_stmt,       // children: test, block, [block "else" | if_stmt (elif)]
  for_stmt,      // children: target, iter, block, [block "else"]
  while_stmt,    // children: test, block, [block "else"]
  try_stmt,      // children: block, except_handler..., [block "else"], [block "finally"]
  except_handler,  // text: bound name; children: [type], block
  with_stmt,     // children: with_item..., block
  with_item,     // children: context, [target]
  match_stmt,    // children: subject, match_case...
  match_case,    // children: pattern, [guard], block; flag_guard when a guard is present
  return_stmt,
  assign,        // children: targets..., value
  aug_assign,    // text: operator
  ann_assign,
  delete_stmt,
  raise_stmt,
  assert_stmt,
  import_stmt,   // children: alias...
  import_from,   // text: module (with leading dots)
  alias,         // text: dotted name; children: [name "as"]
  global_stmt,
  nonlocal_stmt,
  pass_stmt,
  break_stmt,
  continue_stmt,
  expr_stmt,
  // expressions
  bool_op,       // text: "and" | "or"; children: operands (flattened)
  named_expr,
  bin_op,        // text: operator
  unary_op,      // text: operator
  lambda,        // children: arguments, body
  if_exp,        // children: body, test, orelse
  compare,       // text: space-joined operators; children: operands
  call,          // children: func, args...
  keyword,       // text: name (empty for **kwargs); children: value
  attribute,     // text: attribute name; children: value
  subscript,     // children: value, slice
  slice,
  starred,
  double_starred,
  name,
  constant,      // text: literal source
  list,
  tuple,
  set,
  dict,          // children: alternating key, value (double_starred has no partner)
  comprehension, // text: "list" | "set" | "dict" | "generator"; children: element(s), comp_for...
  comp_for,      // children: target, iter, comp_if...
  comp_if,       // children: condition
  await_expr,
  yield_expr,
  yield_from,
  decorator,
  arguments,
  param,         // text: name (with * or ** prefix); children: [annotation], [default]
  pattern_as,    // match pattern "p as name"
};

enum NodeFlag : std::uint32_t {
  flag_none = 0,
  flag_async = 1u << 0,
  flag_elif = 1u << 1,
  flag_guard = 1u << 2,
  flag_wildcard = 1u << 3,  // irrefutable `case _:` pattern
  flag_docstring = 1u << 4,
};

struct Node {
  NodeKind kind = NodeKind::module;
  std::string text;
  std::uint32_t flags = flag_none;
  std::size_t line = 0;
  std::size_t col = 0;
  std::size_t end_line = 0;
  std::vector<Node> children;

  bool has(NodeFlag f) const noexcept { return (flags & f) != 0; }
};

std::string_view to_string(NodeKind kind) noexcept;

/// Parsed module plus the significant tokens that make up its leaves.
struct ParsedModule {
  Node root;
  std::vector<Token> tokens;
  std::size_t physical_lines = 0;
};

/// Parses Python 3 source (3.10 grammar, including `match`).
/// Throws ParseError with the offending line/column on invalid input.
ParsedModule parse_module(std::string_view source);

}  // namespace librarian::code
