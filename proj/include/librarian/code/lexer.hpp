#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace librarian::code {

enum class TokenKind {
  name,     // identifiers and keywords
  number,
  string,   // one literal, including prefix and quotes; f-strings stay opaque
  op,       // operators and delimiters
  newline,  // logical line end
  nl,       // non-logical line break (blank line, inside brackets)
  comment,
  indent,
  dedent,
  end_marker,
};

/// Positions are 1-based lines and 0-based byte columns, as in CPython's tokenize.
struct Token {
  TokenKind kind;
  std::string text;
  std::size_t line = 0;
  std::size_t col = 0;
  std::size_t end_line = 0;
  std::size_t end_col = 0;
};

/// Tokenizes Python 3 source. Throws ParseError on unterminated strings,
/// inconsistent dedents, unbalanced brackets or stray characters.
std::vector<Token> tokenize(std::string_view source);

bool is_keyword(std::string_view word) noexcept;

}  // namespace librarian::code
