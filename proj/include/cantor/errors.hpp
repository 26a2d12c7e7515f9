#pragma once

#include <stdexcept>
#include <string>

namespace cantor {

// Error classes map 1:1 onto CLI exit codes (see tools/): parse 2,
// precondition 3, budget 4, structural invariant 5.

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PreconditionError : std::runtime_error {
  explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation is structurally inapplicable (degenerate gap, too few gaps, ...).
struct NotApplicableError : PreconditionError {
  explicit NotApplicableError(const std::string& msg) : PreconditionError(msg) {}
};

struct ArgumentError : PreconditionError {
  explicit ArgumentError(const std::string& msg) : PreconditionError(msg) {}
};

// Enclosure cannot be tightened: the value carries no re-evaluation recipe.
struct RefineError : PreconditionError {
  explicit RefineError(const std::string& msg) : PreconditionError(msg) {}
};

struct BudgetError : std::runtime_error {
  explicit BudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cantor
