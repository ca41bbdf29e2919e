#pragma once

#include <stdexcept>
#include <string>

namespace countkit {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  ok = 0,
  input = 2,
  numeric = 3,
  resolution = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Malformed file contents (bad JSON, bad numbers).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what, ExitCode::input) {}
};

// Well-formed input that violates a contract (unknown ids, bad shapes).
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(what, ExitCode::input) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error(what, ExitCode::input) {}
};

// Non-finite values during training or evaluation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, ExitCode::numeric) {}
};

// A question noun that cannot be mapped to a category.
class ResolutionError : public Error {
 public:
  explicit ResolutionError(const std::string& what)
      : Error(what, ExitCode::resolution) {}
};

}  // namespace countkit
