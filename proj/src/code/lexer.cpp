#include "librarian/code/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "librarian/errors.hpp"

namespace librarian::code {

namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",       "assert", "async",
    "await", "break",  "class",   "continue", "def",      "del",    "elif",
    "else",  "except", "finally", "for",      "from",     "global", "if",
    "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
    "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};

// Longest first so a linear scan finds the maximal munch.
constexpr std::array<std::string_view, 48> kOperators = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=",
    ">=",  "==",  "!=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "@=",
    "+",   "-",   "*",   "/",   "%",   "@",  "&",  "|",  "^",  "~",  "<",  ">",
    "(",   ")",   "[",   "]",   "{",   "}",  ",",  ":",  ".",  ";",  "=",  "`"};

bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

bool is_ident_char(unsigned char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_) {
        if (handle_line_start()) continue;
      }
      scan_token();
    }
    finish();
    return std::move(out_);
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t line_begin_ = 0;
  bool at_line_start_ = true;
  bool pending_logical_ = false;  // tokens emitted since the last NEWLINE
  std::vector<std::size_t> indents_;
  std::vector<std::pair<char, Token>> brackets_;
  std::vector<Token> out_;

  std::size_t col() const { return pos_ - line_begin_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col()); }

  void emit(TokenKind kind, std::string text, std::size_t line, std::size_t col) {
    Token t{kind, std::move(text), line, col, line_, this->col()};
    out_.push_back(std::move(t));
  }

  bool at_newline() const { return src_[pos_] == '\n' || src_[pos_] == '\r'; }

  void consume_newline() {
    if (src_[pos_] == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') ++pos_;
    ++pos_;
    ++line_;
    line_begin_ = pos_;
  }

  // Returns true when the whole line was consumed (blank or comment-only).
  bool handle_line_start() {
    at_line_start_ = false;
    if (!brackets_.empty()) return false;
    std::size_t width = 0;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ') {
        ++width;
      } else if (c == '\t') {
        width = (width / 8 + 1) * 8;
      } else if (c == '\f') {
        width = 0;
      } else {
        break;
      }
      ++pos_;
    }
    if (pos_ >= src_.size()) return true;
    if (src_[pos_] == '#' || at_newline()) {
      if (src_[pos_] == '#') scan_comment();
      std::size_t l = line_, c = col();
      if (pos_ < src_.size()) {
        consume_newline();
        out_.push_back(Token{TokenKind::nl, "\n", l, c, l, c + 1});
      }
      at_line_start_ = true;
      return true;
    }
    if (src_[pos_] == '\\' && pos_ + 1 < src_.size() &&
        (src_[pos_ + 1] == '\n' || src_[pos_ + 1] == '\r')) {
      // A continuation at the start of a line does not open a new logical line.
      return false;
    }
    if (width > indents_.back()) {
      indents_.push_back(width);
      out_.push_back(Token{TokenKind::indent, std::string(src_.substr(line_begin_, pos_ - line_begin_)),
                           line_, 0, line_, col()});
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        out_.push_back(Token{TokenKind::dedent, "", line_, col(), line_, col()});
      }
      if (width != indents_.back()) fail("unindent does not match any outer indentation level");
    }
    return false;
  }

  void scan_comment() {
    std::size_t start = pos_, c = col();
    while (pos_ < src_.size() && !at_newline()) ++pos_;
    out_.push_back(Token{TokenKind::comment, std::string(src_.substr(start, pos_ - start)), line_, c,
                         line_, col()});
  }

  void scan_token() {
    char c = src_[pos_];
    if (c == ' ' || c == '\t' || c == '\f') {
      ++pos_;
      return;
    }
    if (at_newline()) {
      std::size_t l = line_, cl = col();
      consume_newline();
      if (brackets_.empty() && pending_logical_) {
        out_.push_back(Token{TokenKind::newline, "\n", l, cl, l, cl + 1});
        pending_logical_ = false;
      } else {
        out_.push_back(Token{TokenKind::nl, "\n", l, cl, l, cl + 1});
      }
      at_line_start_ = true;
      return;
    }
    if (c == '#') {
      scan_comment();
      return;
    }
    if (c == '\\') {
      ++pos_;
      if (pos_ < src_.size() && at_newline()) {
        consume_newline();
        if (pos_ >= src_.size()) fail("unexpected end of file after line continuation");
        return;
      }
      fail("unexpected character after line continuation character");
    }
    pending_logical_ = true;
    auto uc = static_cast<unsigned char>(c);
    if (is_string_start()) {
      scan_string();
      return;
    }
    if (is_ident_start(uc)) {
      std::size_t start = pos_, cl = col();
      while (pos_ < src_.size() && is_ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      emit(TokenKind::name, std::string(src_.substr(start, pos_ - start)), line_, cl);
      return;
    }
    if (is_digit(uc) || (c == '.' && pos_ + 1 < src_.size() && is_digit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      scan_number();
      return;
    }
    scan_operator();
  }

  bool is_string_start() const {
    std::size_t p = pos_;
    std::size_t n = 0;
    while (p < src_.size() && n < 2) {
      char c = static_cast<char>(src_[p] | 0x20);
      if (c == 'r' || c == 'b' || c == 'u' || c == 'f') {
        ++p;
        ++n;
      } else {
        break;
      }
    }
    return p < src_.size() && (src_[p] == '\'' || src_[p] == '"');
  }

  void scan_string() {
    std::size_t start = pos_, l = line_, cl = col();
    while (src_[pos_] != '\'' && src_[pos_] != '"') ++pos_;
    char q = src_[pos_];
    bool triple = pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q;
    pos_ += triple ? 3 : 1;
    while (true) {
      if (pos_ >= src_.size()) {
        throw ParseError(triple ? "unterminated triple-quoted string literal" : "unterminated string literal", l, cl);
      }
      char c = src_[pos_];
      if (c == '\\') {
        ++pos_;
        if (pos_ < src_.size()) {
          if (at_newline()) {
            consume_newline();
          } else {
            ++pos_;
          }
        }
        continue;
      }
      if (at_newline()) {
        if (!triple) throw ParseError("unterminated string literal", l, cl);
        consume_newline();
        continue;
      }
      if (c == q) {
        if (!triple) {
          ++pos_;
          break;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q) {
          pos_ += 3;
          break;
        }
      }
      ++pos_;
    }
    out_.push_back(Token{TokenKind::string, std::string(src_.substr(start, pos_ - start)), l, cl, line_, col()});
  }

  void scan_number() {
    std::size_t start = pos_, cl = col();
    auto peek = [&](std::size_t k) -> char { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; };
    char p1 = static_cast<char>(peek(1) | 0x20);
    if (src_[pos_] == '0' && (p1 == 'x' || p1 == 'o' || p1 == 'b')) {
      pos_ += 2;
      while (pos_ < src_.size() && (std::isxdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    } else {
      auto digits = [&] {
        while (pos_ < src_.size() && (is_digit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      };
      digits();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        ++pos_;
        digits();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t save = pos_;
        ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
        if (pos_ < src_.size() && is_digit(static_cast<unsigned char>(src_[pos_]))) {
          digits();
        } else {
          pos_ = save;
        }
      }
      if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) ++pos_;
    }
    emit(TokenKind::number, std::string(src_.substr(start, pos_ - start)), line_, cl);
  }

  void scan_operator() {
    std::string_view rest = src_.substr(pos_);
    for (std::string_view op : kOperators) {
      if (rest.starts_with(op)) {
        if (op == "`") break;
        std::size_t cl = col();
        Token t{TokenKind::op, std::string(op), line_, cl, line_, cl + op.size()};
        pos_ += op.size();
        track_bracket(t);
        out_.push_back(std::move(t));
        return;
      }
    }
    fail(std::string("invalid character '") + src_[pos_] + "'");
  }

  void track_bracket(const Token& t) {
    char c = t.text[0];
    if (t.text.size() != 1) return;
    if (c == '(' || c == '[' || c == '{') {
      brackets_.emplace_back(c, t);
    } else if (c == ')' || c == ']' || c == '}') {
      char open = c == ')' ? '(' : (c == ']' ? '[' : '{');
      if (brackets_.empty()) throw ParseError(std::string("unmatched '") + c + "'", t.line, t.col);
      if (brackets_.back().first != open) {
        throw ParseError(std::string("closing parenthesis '") + c + "' does not match '" +
                             brackets_.back().first + "'",
                         t.line, t.col);
      }
      brackets_.pop_back();
    }
  }

  void finish() {
    if (!brackets_.empty()) {
      const Token& t = brackets_.back().second;
      throw ParseError(std::string("'") + t.text + "' was never closed", t.line, t.col);
    }
    if (pending_logical_) {
      out_.push_back(Token{TokenKind::newline, "", line_, col(), line_, col()});
      pending_logical_ = false;
    }
    std::size_t l = at_line_start_ && pos_ == line_begin_ ? line_ : line_ + 1;
    while (indents_.size() > 1) {
      indents_.pop_back();
      out_.push_back(Token{TokenKind::dedent, "", l, 0, l, 0});
    }
    out_.push_back(Token{TokenKind::end_marker, "", l, 0, l, 0});
  }
};

}  // namespace

bool is_keyword(std::string_view word) noexcept {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view source) {
  // A UTF-8 byte-order mark is not part of the program text.
  if (source.starts_with("\xEF\xBB\xBF")) source.remove_prefix(3);
  return Lexer(source).run();
}

}  // namespace librarian::code
