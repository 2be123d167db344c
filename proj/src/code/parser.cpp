#include <algorithm>

#include "librarian/code/ast.hpp"
#include "librarian/errors.hpp"

namespace librarian::code {

namespace {

using Tokens = std::vector<Token>;

bool is_augassign(std::string_view op) {
  static constexpr std::string_view kOps[] = {"+=", "-=", "*=", "/=", "//=", "%=", "@=",
                                              "&=", "|=", "^=", ">>=", "<<=", "**="};
  return std::find(std::begin(kOps), std::end(kOps), op) != std::end(kOps);
}

class Parser {
 public:
  explicit Parser(Tokens toks) : toks_(std::move(toks)) {}

  Node parse_file() {
    Node mod = node_at(NodeKind::module, peek());
    mod.line = 1;
    while (!at(TokenKind::end_marker)) {
      if (at(TokenKind::newline)) {
        advance();
        continue;
      }
      if (at(TokenKind::indent)) fail_here("unexpected indent");
      if (at(TokenKind::dedent)) fail_here("unexpected unindent");
      parse_statement(mod.children);
    }
    mark_docstring(mod);
    mod.end_line = toks_.empty() ? 0 : last_end_line_;
    return mod;
  }

 private:
  Tokens toks_;
  std::size_t i_ = 0;
  std::size_t last_end_line_ = 1;

  // ---- token helpers -------------------------------------------------------

  const Token& peek(std::size_t k = 0) const {
    std::size_t j = std::min(i_ + k, toks_.size() - 1);
    return toks_[j];
  }
  bool at(TokenKind kind, std::size_t k = 0) const { return peek(k).kind == kind; }
  bool at_op(std::string_view op, std::size_t k = 0) const {
    const Token& t = peek(k);
    return t.kind == TokenKind::op && t.text == op;
  }
  bool at_kw(std::string_view kw, std::size_t k = 0) const {
    const Token& t = peek(k);
    return t.kind == TokenKind::name && t.text == kw;
  }
  bool at_name(std::size_t k = 0) const {
    const Token& t = peek(k);
    return t.kind == TokenKind::name && !is_keyword(t.text);
  }

  const Token& advance() {
    const Token& t = toks_[i_];
    if (i_ + 1 < toks_.size()) ++i_;
    if (t.kind != TokenKind::dedent && t.kind != TokenKind::indent) last_end_line_ = t.end_line;
    return t;
  }

  [[noreturn]] void fail_here(const std::string& msg) const {
    const Token& t = peek();
    throw ParseError(msg, t.line, t.col);
  }

  [[noreturn]] void fail_unexpected() const {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::end_marker: fail_here("unexpected end of input");
      case TokenKind::newline: fail_here("invalid syntax: unexpected end of line");
      case TokenKind::indent: fail_here("unexpected indent");
      case TokenKind::dedent: fail_here("unexpected unindent");
      default: fail_here("invalid syntax near '" + t.text + "'");
    }
  }

  void expect_op(std::string_view op) {
    if (!at_op(op)) {
      if (at(TokenKind::end_marker) || at(TokenKind::newline)) fail_here("expected '" + std::string(op) + "'");
      fail_here("expected '" + std::string(op) + "' near '" + peek().text + "'");
    }
    advance();
  }
  void expect_kw(std::string_view kw) {
    if (!at_kw(kw)) fail_here("expected '" + std::string(kw) + "'");
    advance();
  }
  std::string expect_name() {
    if (!at_name()) fail_here("expected identifier");
    return advance().text;
  }

  Node node_at(NodeKind kind, const Token& t, std::string text = {}) const {
    Node n;
    n.kind = kind;
    n.text = std::move(text);
    n.line = t.line;
    n.col = t.col;
    n.end_line = t.end_line;
    return n;
  }
  Node& close(Node& n) const {
    n.end_line = std::max(n.end_line, last_end_line_);
    return n;
  }

  // ---- statements ----------------------------------------------------------

  void parse_statement(std::vector<Node>& out) {
    if (at_op("@")) {
      out.push_back(parse_decorated());
      return;
    }
    if (at(TokenKind::name)) {
      const std::string& w = peek().text;
      if (w == "def") { out.push_back(parse_funcdef({}, flag_none)); return; }
      if (w == "class") { out.push_back(parse_classdef({})); return; }
      if (w == "if") { out.push_back(parse_if()); return; }
      if (w == "while") { out.push_back(parse_while()); return; }
      if (w == "for") { out.push_back(parse_for(flag_none)); return; }
      if (w == "try") { out.push_back(parse_try()); return; }
      if (w == "with") { out.push_back(parse_with(flag_none)); return; }
      if (w == "async") {
        const Token& start = peek();
        advance();
        if (at_kw("def")) { out.push_back(parse_funcdef({}, flag_async, &start)); return; }
        if (at_kw("for")) { out.push_back(parse_for(flag_async, &start)); return; }
        if (at_kw("with")) { out.push_back(parse_with(flag_async, &start)); return; }
        fail_here("expected 'def', 'for' or 'with' after 'async'");
      }
      if (w == "match" && !is_keyword(peek(1).text) ) {
        std::size_t save = i_;
        std::size_t save_end = last_end_line_;
        try {
          out.push_back(parse_match());
          return;
        } catch (const ParseError&) {
          i_ = save;
          last_end_line_ = save_end;
        }
      }
    }
    parse_simple_statements(out);
  }

  void parse_simple_statements(std::vector<Node>& out) {
    out.push_back(parse_simple_statement());
    while (at_op(";")) {
      advance();
      if (at(TokenKind::newline)) break;
      out.push_back(parse_simple_statement());
    }
    if (!at(TokenKind::newline)) fail_unexpected();
    advance();
  }

  Node parse_simple_statement() {
    const Token& start = peek();
    if (start.kind == TokenKind::name) {
      const std::string& w = start.text;
      if (w == "pass") { advance(); return node_at(NodeKind::pass_stmt, start); }
      if (w == "break") { advance(); return node_at(NodeKind::break_stmt, start); }
      if (w == "continue") { advance(); return node_at(NodeKind::continue_stmt, start); }
      if (w == "return") {
        Node n = node_at(NodeKind::return_stmt, start);
        advance();
        if (!at_statement_end()) n.children.push_back(parse_star_expressions());
        return close(n);
      }
      if (w == "raise") {
        Node n = node_at(NodeKind::raise_stmt, start);
        advance();
        if (!at_statement_end()) {
          n.children.push_back(parse_expression());
          if (at_kw("from")) {
            advance();
            n.children.push_back(parse_expression());
          }
        }
        return close(n);
      }
      if (w == "global" || w == "nonlocal") {
        Node n = node_at(w == "global" ? NodeKind::global_stmt : NodeKind::nonlocal_stmt, start);
        advance();
        do {
          const Token& t = peek();
          n.children.push_back(node_at(NodeKind::name, t, expect_name()));
        } while (at_op(",") && (advance(), true));
        return close(n);
      }
      if (w == "del") {
        Node n = node_at(NodeKind::delete_stmt, start);
        advance();
        n.children.push_back(parse_star_expressions());
        return close(n);
      }
      if (w == "assert") {
        Node n = node_at(NodeKind::assert_stmt, start);
        advance();
        n.children.push_back(parse_expression());
        if (at_op(",")) {
          advance();
          n.children.push_back(parse_expression());
        }
        return close(n);
      }
      if (w == "import") return parse_import();
      if (w == "from") return parse_import_from();
    }
    return parse_expression_statement();
  }

  bool at_statement_end() const { return at(TokenKind::newline) || at_op(";"); }

  Node parse_import() {
    Node n = node_at(NodeKind::import_stmt, peek());
    advance();
    do {
      n.children.push_back(parse_alias(true));
    } while (at_op(",") && (advance(), true));
    return close(n);
  }

  Node parse_alias(bool dotted) {
    const Token& start = peek();
    std::string name = expect_name();
    while (dotted && at_op(".")) {
      advance();
      name += "." + expect_name();
    }
    Node a = node_at(NodeKind::alias, start, name);
    if (at_kw("as")) {
      advance();
      const Token& t = peek();
      a.children.push_back(node_at(NodeKind::name, t, expect_name()));
    }
    return close(a);
  }

  Node parse_import_from() {
    Node n = node_at(NodeKind::import_from, peek());
    advance();
    std::string module;
    while (at_op(".") || at_op("...")) module += advance().text;
    if (!at_kw("import")) {
      module += expect_name();
      while (at_op(".")) {
        advance();
        module += "." + expect_name();
      }
    }
    if (module.empty()) fail_here("expected module name");
    n.text = module;
    expect_kw("import");
    if (at_op("*")) {
      n.children.push_back(node_at(NodeKind::alias, peek(), "*"));
      advance();
    } else if (at_op("(")) {
      advance();
      do {
        if (at_op(")")) break;
        n.children.push_back(parse_alias(false));
      } while (at_op(",") && (advance(), true));
      expect_op(")");
    } else {
      do {
        n.children.push_back(parse_alias(false));
      } while (at_op(",") && (advance(), true));
    }
    return close(n);
  }

  Node parse_expression_statement() {
    const Token& start = peek();
    Node first = at_kw("yield") ? parse_yield() : parse_star_expressions();
    if (at_op(":")) {
      Node n = node_at(NodeKind::ann_assign, start);
      advance();
      n.children.push_back(std::move(first));
      n.children.push_back(parse_expression());
      if (at_op("=")) {
        advance();
        n.children.push_back(at_kw("yield") ? parse_yield() : parse_star_expressions());
      }
      return close(n);
    }
    if (peek().kind == TokenKind::op && is_augassign(peek().text)) {
      Node n = node_at(NodeKind::aug_assign, start, peek().text);
      advance();
      n.children.push_back(std::move(first));
      n.children.push_back(at_kw("yield") ? parse_yield() : parse_star_expressions());
      return close(n);
    }
    if (at_op("=")) {
      Node n = node_at(NodeKind::assign, start);
      n.children.push_back(std::move(first));
      while (at_op("=")) {
        advance();
        n.children.push_back(at_kw("yield") ? parse_yield() : parse_star_expressions());
      }
      return close(n);
    }
    Node n = node_at(NodeKind::expr_stmt, start);
    n.children.push_back(std::move(first));
    return close(n);
  }

  Node parse_block(std::string label = "body") {
    Node b = node_at(NodeKind::block, peek(), std::move(label));
    expect_op(":");
    if (at(TokenKind::newline)) {
      advance();
      if (!at(TokenKind::indent)) fail_here("expected an indented block");
      advance();
      while (!at(TokenKind::dedent) && !at(TokenKind::end_marker)) {
        if (at(TokenKind::newline)) {
          advance();
          continue;
        }
        if (at(TokenKind::indent)) fail_here("unexpected indent");
        parse_statement(b.children);
      }
      if (at(TokenKind::dedent)) advance();
    } else {
      parse_simple_statements(b.children);
    }
    if (!b.children.empty()) {
      b.line = b.children.front().line;
      b.col = b.children.front().col;
    }
    return close(b);
  }

  Node parse_decorated() {
    std::vector<Node> decorators;
    const Token& start = peek();
    while (at_op("@")) {
      Node d = node_at(NodeKind::decorator, peek());
      advance();
      d.children.push_back(parse_named_expression());
      if (!at(TokenKind::newline)) fail_unexpected();
      advance();
      decorators.push_back(std::move(close(d)));
    }
    if (at_kw("def")) return parse_funcdef(std::move(decorators), flag_none, &start);
    if (at_kw("class")) return parse_classdef(std::move(decorators), &start);
    if (at_kw("async") && at_kw("def", 1)) {
      advance();
      return parse_funcdef(std::move(decorators), flag_async, &start);
    }
    fail_here("expected 'def' or 'class' after decorator");
  }

  Node parse_funcdef(std::vector<Node> decorators, std::uint32_t flags, const Token* start = nullptr) {
    Node n = node_at(NodeKind::function_def, start ? *start : peek());
    n.flags = flags;
    expect_kw("def");
    n.text = expect_name();
    n.children = std::move(decorators);
    expect_op("(");
    n.children.push_back(parse_parameters(")", true));
    expect_op(")");
    if (at_op("->")) {
      advance();
      n.children.push_back(parse_expression());
    }
    Node body = parse_block();
    mark_docstring(body);
    n.children.push_back(std::move(body));
    return close(n);
  }

  Node parse_classdef(std::vector<Node> decorators, const Token* start = nullptr) {
    Node n = node_at(NodeKind::class_def, start ? *start : peek());
    expect_kw("class");
    n.text = expect_name();
    n.children = std::move(decorators);
    if (at_op("(")) {
      advance();
      parse_call_arguments(n.children);
      expect_op(")");
    }
    Node body = parse_block();
    mark_docstring(body);
    n.children.push_back(std::move(body));
    return close(n);
  }

  static void mark_docstring(Node& body) {
    if (body.children.empty()) return;
    Node& first = body.children.front();
    if (first.kind == NodeKind::expr_stmt && first.children.size() == 1 &&
        first.children[0].kind == NodeKind::constant && !first.children[0].text.empty()) {
      char c = first.children[0].text.back();
      if (c == '"' || c == '\'') first.flags |= flag_docstring;
    }
  }

  // Parameter list for def (annotations allowed) or lambda (terminated by ':').
  Node parse_parameters(std::string_view terminator, bool annotations) {
    Node args = node_at(NodeKind::arguments, peek());
    while (!at_op(terminator)) {
      const Token& t = peek();
      if (at_op("/")) {
        advance();
      } else if (at_op("*") || at_op("**")) {
        std::string prefix = advance().text;
        if (prefix == "*" && (at_op(",") || at_op(terminator))) {
          args.children.push_back(node_at(NodeKind::param, t, "*"));
        } else {
          Node p = node_at(NodeKind::param, t, prefix + expect_name());
          if (annotations && at_op(":")) {
            advance();
            p.children.push_back(at_op("*") ? parse_star_expression() : parse_expression());
          }
          args.children.push_back(std::move(close(p)));
        }
      } else {
        Node p = node_at(NodeKind::param, t, expect_name());
        if (annotations && at_op(":")) {
          advance();
          p.children.push_back(parse_expression());
        }
        if (at_op("=")) {
          advance();
          p.children.push_back(parse_expression());
        }
        args.children.push_back(std::move(close(p)));
      }
      if (!at_op(",")) break;
      advance();
    }
    return close(args);
  }

  Node parse_if() {
    Node n = node_at(NodeKind::if_stmt, peek());
    advance();  // 'if' or 'elif'
    n.children.push_back(parse_named_expression());
    n.children.push_back(parse_block());
    if (at_kw("elif")) {
      Node elif = parse_if();
      elif.flags |= flag_elif;
      n.children.push_back(std::move(elif));
    } else if (at_kw("else")) {
      advance();
      n.children.push_back(parse_block("else"));
    }
    return close(n);
  }

  Node parse_while() {
    Node n = node_at(NodeKind::while_stmt, peek());
    advance();
    n.children.push_back(parse_named_expression());
    n.children.push_back(parse_block());
    if (at_kw("else")) {
      advance();
      n.children.push_back(parse_block("else"));
    }
    return close(n);
  }

  Node parse_for(std::uint32_t flags, const Token* start = nullptr) {
    Node n = node_at(NodeKind::for_stmt, start ? *start : peek());
    n.flags = flags;
    expect_kw("for");
    n.children.push_back(parse_target_list());
    expect_kw("in");
    n.children.push_back(parse_star_expressions());
    n.children.push_back(parse_block());
    if (at_kw("else")) {
      advance();
      n.children.push_back(parse_block("else"));
    }
    return close(n);
  }

  Node parse_try() {
    Node n = node_at(NodeKind::try_stmt, peek());
    advance();
    n.children.push_back(parse_block());
    bool handlers = false;
    while (at_kw("except")) {
      handlers = true;
      Node h = node_at(NodeKind::except_handler, peek());
      advance();
      if (at_op("*")) advance();
      if (!at_op(":")) {
        h.children.push_back(parse_expression());
        if (at_op(",")) {
          // except A, B: is Python 2 only
          fail_here("multiple exception types must be parenthesized");
        }
        if (at_kw("as")) {
          advance();
          h.text = expect_name();
        }
      }
      h.children.push_back(parse_block());
      n.children.push_back(std::move(close(h)));
    }
    bool has_else = false;
    if (handlers && at_kw("else")) {
      advance();
      n.children.push_back(parse_block("else"));
      has_else = true;
    }
    if (at_kw("finally")) {
      advance();
      n.children.push_back(parse_block("finally"));
    } else if (!handlers) {
      fail_here("expected 'except' or 'finally' block");
    }
    (void)has_else;
    return close(n);
  }

  Node parse_with(std::uint32_t flags, const Token* start = nullptr) {
    Node n = node_at(NodeKind::with_stmt, start ? *start : peek());
    n.flags = flags;
    expect_kw("with");
    bool done = false;
    if (at_op("(")) {
      std::size_t save = i_;
      std::size_t save_end = last_end_line_;
      try {
        advance();
        std::vector<Node> items;
        do {
          if (at_op(")")) break;
          items.push_back(parse_with_item());
        } while (at_op(",") && (advance(), true));
        expect_op(")");
        if (!at_op(":")) throw ParseError("not a parenthesized with", 0, 0);
        for (auto& it : items) n.children.push_back(std::move(it));
        done = true;
      } catch (const ParseError&) {
        i_ = save;
        last_end_line_ = save_end;
      }
    }
    if (!done) {
      do {
        n.children.push_back(parse_with_item());
      } while (at_op(",") && (advance(), true));
    }
    n.children.push_back(parse_block());
    return close(n);
  }

  Node parse_with_item() {
    Node item = node_at(NodeKind::with_item, peek());
    item.children.push_back(parse_expression());
    if (at_kw("as")) {
      advance();
      item.children.push_back(parse_target());
    }
    return close(item);
  }

  Node parse_match() {
    Node n = node_at(NodeKind::match_stmt, peek());
    advance();  // 'match'
    n.children.push_back(parse_star_named_expressions());
    expect_op(":");
    if (!at(TokenKind::newline)) fail_here("expected newline after match subject");
    advance();
    if (!at(TokenKind::indent)) fail_here("expected an indented block");
    advance();
    while (!at(TokenKind::dedent) && !at(TokenKind::end_marker)) {
      if (at(TokenKind::newline)) {
        advance();
        continue;
      }
      if (!at_kw("case")) fail_here("expected 'case'");
      Node c = node_at(NodeKind::match_case, peek());
      advance();
      Node pattern = parse_pattern_sequence();
      bool wildcard = pattern.kind == NodeKind::name && pattern.text == "_";
      c.children.push_back(std::move(pattern));
      if (at_kw("if")) {
        advance();
        c.children.push_back(parse_named_expression());
        c.flags |= flag_guard;
      } else if (wildcard) {
        c.flags |= flag_wildcard;
      }
      c.children.push_back(parse_block());
      n.children.push_back(std::move(close(c)));
    }
    if (n.children.size() < 2) fail_here("match statement needs at least one case");
    if (at(TokenKind::dedent)) advance();
    return close(n);
  }

  Node parse_pattern_sequence() {
    const Token& start = peek();
    Node first = parse_pattern();
    if (!at_op(",")) return first;
    Node tup = node_at(NodeKind::tuple, start);
    tup.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op(":") || at_kw("if")) break;
      tup.children.push_back(parse_pattern());
    }
    return close(tup);
  }

  Node parse_pattern() {
    const Token& start = peek();
    Node p = at_op("*") ? parse_star_expression() : parse_bitwise_or();
    if (at_kw("as")) {
      advance();
      Node as = node_at(NodeKind::pattern_as, start);
      as.children.push_back(std::move(p));
      const Token& t = peek();
      as.children.push_back(node_at(NodeKind::name, t, expect_name()));
      return close(as);
    }
    return p;
  }

  // ---- targets -------------------------------------------------------------

  Node parse_target() {
    if (at_op("*")) return parse_star_expression();
    return parse_bitwise_or();
  }

  // Comma-separated targets of `for`, stopping before `in`.
  Node parse_target_list() {
    const Token& start = peek();
    Node first = parse_target();
    if (!at_op(",")) return first;
    Node tup = node_at(NodeKind::tuple, start);
    tup.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (at_kw("in")) break;
      tup.children.push_back(parse_target());
    }
    return close(tup);
  }

  // ---- expressions ---------------------------------------------------------

  Node parse_star_expressions() {
    const Token& start = peek();
    Node first = parse_star_expression();
    if (!at_op(",")) return first;
    Node tup = node_at(NodeKind::tuple, start);
    tup.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (!starts_expression()) break;
      tup.children.push_back(parse_star_expression());
    }
    return close(tup);
  }

  Node parse_star_named_expressions() {
    const Token& start = peek();
    Node first = at_op("*") ? parse_star_expression() : parse_named_expression();
    if (!at_op(",")) return first;
    Node tup = node_at(NodeKind::tuple, start);
    tup.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (!starts_expression()) break;
      tup.children.push_back(at_op("*") ? parse_star_expression() : parse_named_expression());
    }
    return close(tup);
  }

  bool starts_expression() const {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::name:
        if (!is_keyword(t.text)) return true;
        return t.text == "not" || t.text == "lambda" || t.text == "await" || t.text == "None" ||
               t.text == "True" || t.text == "False" || t.text == "yield";
      case TokenKind::number:
      case TokenKind::string: return true;
      case TokenKind::op:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" || t.text == "+" ||
               t.text == "~" || t.text == "*" || t.text == "..." || t.text == "**";
      default: return false;
    }
  }

  Node parse_star_expression() {
    if (at_op("*")) {
      Node n = node_at(NodeKind::starred, peek());
      advance();
      n.children.push_back(parse_bitwise_or());
      return close(n);
    }
    return parse_expression();
  }

  Node parse_named_expression() {
    if (at_name() && at_op(":=", 1)) {
      Node n = node_at(NodeKind::named_expr, peek());
      n.children.push_back(node_at(NodeKind::name, peek(), peek().text));
      advance();
      advance();
      n.children.push_back(parse_expression());
      return close(n);
    }
    return parse_expression();
  }

  Node parse_expression() {
    if (at_kw("lambda")) return parse_lambda();
    const Token& start = peek();
    Node body = parse_disjunction();
    if (at_kw("if")) {
      Node n = node_at(NodeKind::if_exp, start);
      advance();
      n.children.push_back(std::move(body));
      n.children.push_back(parse_disjunction());
      expect_kw("else");
      n.children.push_back(parse_expression());
      return close(n);
    }
    return body;
  }

  Node parse_expression_nocond() {
    if (at_kw("lambda")) return parse_lambda();
    return parse_disjunction();
  }

  Node parse_lambda() {
    Node n = node_at(NodeKind::lambda, peek());
    advance();
    n.children.push_back(parse_parameters(":", false));
    expect_op(":");
    n.children.push_back(parse_expression());
    return close(n);
  }

  Node parse_bool_chain(std::string_view op, Node (Parser::*next)()) {
    const Token& start = peek();
    Node first = (this->*next)();
    if (!at_kw(op)) return first;
    Node n = node_at(NodeKind::bool_op, start, std::string(op));
    n.children.push_back(std::move(first));
    while (at_kw(op)) {
      advance();
      n.children.push_back((this->*next)());
    }
    return close(n);
  }

  Node parse_disjunction() { return parse_bool_chain("or", &Parser::parse_conjunction); }
  Node parse_conjunction() { return parse_bool_chain("and", &Parser::parse_inversion); }

  Node parse_inversion() {
    if (at_kw("not")) {
      Node n = node_at(NodeKind::unary_op, peek(), "not");
      advance();
      n.children.push_back(parse_inversion());
      return close(n);
    }
    return parse_comparison();
  }

  std::string comparison_operator() const {
    const Token& t = peek();
    if (t.kind == TokenKind::op) {
      if (t.text == "==" || t.text == "!=" || t.text == "<" || t.text == "<=" || t.text == ">" ||
          t.text == ">=")
        return t.text;
      return {};
    }
    if (t.kind != TokenKind::name) return {};
    if (t.text == "in") return "in";
    if (t.text == "not" && at_kw("in", 1)) return "not in";
    if (t.text == "is") return at_kw("not", 1) ? "is not" : "is";
    return {};
  }

  Node parse_comparison() {
    const Token& start = peek();
    Node first = parse_bitwise_or();
    std::string op = comparison_operator();
    if (op.empty()) return first;
    Node n = node_at(NodeKind::compare, start);
    n.children.push_back(std::move(first));
    while (!op.empty()) {
      advance();
      if (op == "not in" || op == "is not") advance();
      if (!n.text.empty()) n.text += ' ';
      n.text += op;
      n.children.push_back(parse_bitwise_or());
      op = comparison_operator();
    }
    return close(n);
  }

  Node parse_binary(std::initializer_list<std::string_view> ops, Node (Parser::*next)()) {
    const Token& start = peek();
    Node left = (this->*next)();
    while (true) {
      const Token& t = peek();
      if (t.kind != TokenKind::op || std::find(ops.begin(), ops.end(), t.text) == ops.end()) break;
      Node n = node_at(NodeKind::bin_op, start, t.text);
      advance();
      n.children.push_back(std::move(left));
      n.children.push_back((this->*next)());
      left = std::move(close(n));
    }
    return left;
  }

  Node parse_bitwise_or() { return parse_binary({"|"}, &Parser::parse_bitwise_xor); }
  Node parse_bitwise_xor() { return parse_binary({"^"}, &Parser::parse_bitwise_and); }
  Node parse_bitwise_and() { return parse_binary({"&"}, &Parser::parse_shift); }
  Node parse_shift() { return parse_binary({"<<", ">>"}, &Parser::parse_sum); }
  Node parse_sum() { return parse_binary({"+", "-"}, &Parser::parse_term); }
  Node parse_term() { return parse_binary({"*", "/", "//", "%", "@"}, &Parser::parse_factor); }

  Node parse_factor() {
    if (at_op("+") || at_op("-") || at_op("~")) {
      Node n = node_at(NodeKind::unary_op, peek(), peek().text);
      advance();
      n.children.push_back(parse_factor());
      return close(n);
    }
    return parse_power();
  }

  Node parse_power() {
    const Token& start = peek();
    Node base = parse_await_primary();
    if (at_op("**")) {
      Node n = node_at(NodeKind::bin_op, start, "**");
      advance();
      n.children.push_back(std::move(base));
      n.children.push_back(parse_factor());
      return close(n);
    }
    return base;
  }

  Node parse_await_primary() {
    if (at_kw("await")) {
      Node n = node_at(NodeKind::await_expr, peek());
      advance();
      n.children.push_back(parse_primary());
      return close(n);
    }
    return parse_primary();
  }

  Node parse_primary() {
    const Token& start = peek();
    Node n = parse_atom();
    while (true) {
      if (at_op(".")) {
        advance();
        Node a = node_at(NodeKind::attribute, start, expect_name());
        a.children.push_back(std::move(n));
        n = std::move(close(a));
      } else if (at_op("(")) {
        Node c = node_at(NodeKind::call, start);
        advance();
        c.children.push_back(std::move(n));
        parse_call_arguments(c.children);
        expect_op(")");
        n = std::move(close(c));
      } else if (at_op("[")) {
        Node s = node_at(NodeKind::subscript, start);
        advance();
        s.children.push_back(std::move(n));
        s.children.push_back(parse_slices());
        expect_op("]");
        n = std::move(close(s));
      } else {
        break;
      }
    }
    return n;
  }

  void parse_call_arguments(std::vector<Node>& out) {
    while (!at_op(")")) {
      const Token& t = peek();
      if (at_op("*")) {
        out.push_back(parse_star_expression());
      } else if (at_op("**")) {
        Node k = node_at(NodeKind::keyword, t);
        advance();
        k.children.push_back(parse_expression());
        out.push_back(std::move(close(k)));
      } else if (at_name() && at_op("=", 1)) {
        Node k = node_at(NodeKind::keyword, t, t.text);
        advance();
        advance();
        k.children.push_back(parse_expression());
        out.push_back(std::move(close(k)));
      } else {
        Node e = parse_named_expression();
        if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
          Node g = node_at(NodeKind::comprehension, t, "generator");
          g.children.push_back(std::move(e));
          parse_comprehension_clauses(g);
          e = std::move(close(g));
        }
        out.push_back(std::move(e));
      }
      if (!at_op(",")) break;
      advance();
    }
  }

  Node parse_slices() {
    const Token& start = peek();
    Node first = parse_slice();
    if (!at_op(",")) return first;
    Node tup = node_at(NodeKind::tuple, start);
    tup.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op("]")) break;
      tup.children.push_back(parse_slice());
    }
    return close(tup);
  }

  Node parse_slice() {
    const Token& start = peek();
    if (at_op("*")) return parse_star_expression();
    Node lower;
    bool has_lower = false;
    if (!at_op(":")) {
      lower = parse_named_expression();
      has_lower = true;
      if (!at_op(":")) return lower;
    }
    Node s = node_at(NodeKind::slice, start);
    if (has_lower) s.children.push_back(std::move(lower));
    advance();  // ':'
    if (!at_op(":") && !at_op("]") && !at_op(",")) s.children.push_back(parse_expression());
    if (at_op(":")) {
      advance();
      if (!at_op("]") && !at_op(",")) s.children.push_back(parse_expression());
    }
    return close(s);
  }

  Node parse_atom() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::name: {
        if (t.text == "True" || t.text == "False" || t.text == "None") {
          advance();
          return node_at(NodeKind::constant, t, t.text);
        }
        if (is_keyword(t.text)) fail_unexpected();
        advance();
        return node_at(NodeKind::name, t, t.text);
      }
      case TokenKind::number: {
        advance();
        return node_at(NodeKind::constant, t, t.text);
      }
      case TokenKind::string: {
        Node n = node_at(NodeKind::constant, t, t.text);
        advance();
        while (at(TokenKind::string)) {
          n.text += ' ';
          n.text += advance().text;
        }
        return close(n);
      }
      case TokenKind::op: {
        if (t.text == "...") {
          advance();
          return node_at(NodeKind::constant, t, "...");
        }
        if (t.text == "(") return parse_paren();
        if (t.text == "[") return parse_list();
        if (t.text == "{") return parse_brace();
        fail_unexpected();
      }
      default: fail_unexpected();
    }
  }

  Node parse_yield() {
    Node n = node_at(NodeKind::yield_expr, peek());
    advance();
    if (at_kw("from")) {
      advance();
      n.kind = NodeKind::yield_from;
      n.children.push_back(parse_expression());
    } else if (starts_expression()) {
      n.children.push_back(parse_star_expressions());
    }
    return close(n);
  }

  Node parse_paren() {
    const Token& start = peek();
    advance();
    if (at_op(")")) {
      advance();
      Node t = node_at(NodeKind::tuple, start);
      return close(t);
    }
    if (at_kw("yield")) {
      Node y = parse_yield();
      expect_op(")");
      return y;
    }
    Node first = at_op("*") ? parse_star_expression() : parse_named_expression();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node g = node_at(NodeKind::comprehension, start, "generator");
      g.children.push_back(std::move(first));
      parse_comprehension_clauses(g);
      expect_op(")");
      return close(g);
    }
    if (at_op(")")) {
      advance();
      return first;
    }
    Node tup = node_at(NodeKind::tuple, start);
    tup.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op(")")) break;
      tup.children.push_back(at_op("*") ? parse_star_expression() : parse_named_expression());
    }
    expect_op(")");
    return close(tup);
  }

  Node parse_list() {
    const Token& start = peek();
    advance();
    Node list = node_at(NodeKind::list, start);
    if (at_op("]")) {
      advance();
      return close(list);
    }
    Node first = at_op("*") ? parse_star_expression() : parse_named_expression();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node c = node_at(NodeKind::comprehension, start, "list");
      c.children.push_back(std::move(first));
      parse_comprehension_clauses(c);
      expect_op("]");
      return close(c);
    }
    list.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op("]")) break;
      list.children.push_back(at_op("*") ? parse_star_expression() : parse_named_expression());
    }
    expect_op("]");
    return close(list);
  }

  Node parse_dict_item(Node& dict) {
    if (at_op("**")) {
      Node d = node_at(NodeKind::double_starred, peek());
      advance();
      d.children.push_back(parse_bitwise_or());
      return close(d);
    }
    Node key = parse_expression();
    expect_op(":");
    dict.children.push_back(std::move(key));
    return parse_expression();
  }

  Node parse_brace() {
    const Token& start = peek();
    advance();
    if (at_op("}")) {
      advance();
      Node d = node_at(NodeKind::dict, start);
      return close(d);
    }
    bool is_dict = at_op("**");
    Node first;
    Node dict = node_at(NodeKind::dict, start);
    if (!is_dict) {
      first = at_op("*") ? parse_star_expression() : parse_named_expression();
      is_dict = at_op(":");
    }
    if (is_dict) {
      if (at_op("**")) {
        dict.children.push_back(parse_dict_item(dict));
      } else {
        advance();  // ':'
        dict.children.push_back(std::move(first));
        dict.children.push_back(parse_expression());
      }
      if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
        Node c = node_at(NodeKind::comprehension, start, "dict");
        for (auto& ch : dict.children) c.children.push_back(std::move(ch));
        parse_comprehension_clauses(c);
        expect_op("}");
        return close(c);
      }
      while (at_op(",")) {
        advance();
        if (at_op("}")) break;
        Node v = parse_dict_item(dict);
        dict.children.push_back(std::move(v));
      }
      expect_op("}");
      return close(dict);
    }
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node c = node_at(NodeKind::comprehension, start, "set");
      c.children.push_back(std::move(first));
      parse_comprehension_clauses(c);
      expect_op("}");
      return close(c);
    }
    Node set = node_at(NodeKind::set, start);
    set.children.push_back(std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op("}")) break;
      set.children.push_back(at_op("*") ? parse_star_expression() : parse_named_expression());
    }
    expect_op("}");
    return close(set);
  }

  void parse_comprehension_clauses(Node& comp) {
    while (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node f = node_at(NodeKind::comp_for, peek());
      if (at_kw("async")) {
        f.flags |= flag_async;
        advance();
      }
      advance();  // 'for'
      f.children.push_back(parse_target_list());
      expect_kw("in");
      f.children.push_back(parse_disjunction());
      while (at_kw("if")) {
        Node cond = node_at(NodeKind::comp_if, peek());
        advance();
        cond.children.push_back(parse_disjunction());
        f.children.push_back(std::move(close(cond)));
      }
      comp.children.push_back(std::move(close(f)));
    }
  }
};

}  // namespace

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::module: return "Module";
    case NodeKind::function_def: return "FunctionDef";
    case NodeKind::class_def: return "ClassDef";
    case NodeKind::block: return "Block";
    case NodeKind::if_stmt: return "If";
    case NodeKind::for_stmt: return "For";
    case NodeKind::while_stmt: return "While";
    case NodeKind::try_stmt: return "Try";
    case NodeKind::except_handler: return "ExceptHandler";
    case NodeKind::with_stmt: return "With";
    case NodeKind::with_item: return "WithItem";
    case NodeKind::match_stmt: return "Match";
    case NodeKind::match_case: return "MatchCase";
    case NodeKind::return_stmt: return "Return";
    case NodeKind::assign: return "Assign";
    case NodeKind::aug_assign: return "AugAssign";
    case NodeKind::ann_assign: return "AnnAssign";
    case NodeKind::delete_stmt: return "Delete";
    case NodeKind::raise_stmt: return "Raise";
    case NodeKind::assert_stmt: return "Assert";
    case NodeKind::import_stmt: return "Import";
    case NodeKind::import_from: return "ImportFrom";
    case NodeKind::alias: return "Alias";
    case NodeKind::global_stmt: return "Global";
    case NodeKind::nonlocal_stmt: return "Nonlocal";
    case NodeKind::pass_stmt: return "Pass";
    case NodeKind::break_stmt: return "Break";
    case NodeKind::continue_stmt: return "Continue";
    case NodeKind::expr_stmt: return "Expr";
    case NodeKind::bool_op: return "BoolOp";
    case NodeKind::named_expr: return "NamedExpr";
    case NodeKind::bin_op: return "BinOp";
    case NodeKind::unary_op: return "UnaryOp";
    case NodeKind::lambda: return "Lambda";
    case NodeKind::if_exp: return "IfExp";
    case NodeKind::compare: return "Compare";
    case NodeKind::call: return "Call";
    case NodeKind::keyword: return "Keyword";
    case NodeKind::attribute: return "Attribute";
    case NodeKind::subscript: return "Subscript";
    case NodeKind::slice: return "Slice";
    case NodeKind::starred: return "Starred";
    case NodeKind::double_starred: return "DoubleStarred";
    case NodeKind::name: return "Name";
    case NodeKind::constant: return "Constant";
    case NodeKind::list: return "List";
    case NodeKind::tuple: return "Tuple";
    case NodeKind::set: return "Set";
    case NodeKind::dict: return "Dict";
    case NodeKind::comprehension: return "Comprehension";
    case NodeKind::comp_for: return "CompFor";
    case NodeKind::comp_if: return "CompIf";
    case NodeKind::await_expr: return "Await";
    case NodeKind::yield_expr: return "Yield";
    case NodeKind::yield_from: return "YieldFrom";
    case NodeKind::decorator: return "Decorator";
    case NodeKind::arguments: return "Arguments";
    case NodeKind::param: return "Param";
    case NodeKind::pattern_as: return "PatternAs";
  }
  return "Unknown";
}

ParsedModule parse_module(std::string_view source) {
  ParsedModule out;
  out.tokens = tokenize(source);
  Tokens significant;
  significant.reserve(out.tokens.size());
  for (const auto& t : out.tokens) {
    if (t.kind != TokenKind::comment && t.kind != TokenKind::nl) significant.push_back(t);
  }
  out.root = Parser(std::move(significant)).parse_file();
  std::size_t lines = 0;
  if (!source.empty()) {
    lines = static_cast<std::size_t>(std::count(source.begin(), source.end(), '\n'));
    if (source.back() != '\n') ++lines;
  }
  out.physical_lines = lines;
  return out;
}

}  // namespace librarian::code
