#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace librarian {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Syntactically invalid subject-language source. Positions are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " at " + std::to_string(line) + ":" + std::to_string(column)),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

#define LIBRARIAN_DEFINE_ERROR(Name)   \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  };

LIBRARIAN_DEFINE_ERROR(InvalidCandidate)
LIBRARIAN_DEFINE_ERROR(InvalidTask)
LIBRARIAN_DEFINE_ERROR(UnknownTokenizer)
LIBRARIAN_DEFINE_ERROR(EndpointUnavailable)
LIBRARIAN_DEFINE_ERROR(BudgetExceeded)
LIBRARIAN_DEFINE_ERROR(ContextOverflow)
LIBRARIAN_DEFINE_ERROR(DimensionMismatch)
LIBRARIAN_DEFINE_ERROR(ProtocolError)
LIBRARIAN_DEFINE_ERROR(WorkspaceError)
LIBRARIAN_DEFINE_ERROR(BackendProtocolError)
LIBRARIAN_DEFINE_ERROR(UnitMismatch)
LIBRARIAN_DEFINE_ERROR(InsufficientSamples)
LIBRARIAN_DEFINE_ERROR(DisconnectedGraph)
LIBRARIAN_DEFINE_ERROR(IncompleteRun)
LIBRARIAN_DEFINE_ERROR(CacheCorruption)

#undef LIBRARIAN_DEFINE_ERROR

}  // namespace librarian
