#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recaudit {

// Broad failure classes; the CLI maps each to an exit code.
enum class ErrorClass { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

/// Bad caller argument (k <= 0, beta <= 0, unknown metric...).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorClass::Config, what) {}
};

/// A documented precondition of an audit does not hold for the given data.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(ErrorClass::Data, what) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorClass::Data, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownIdError : public Error {
 public:
  explicit UnknownIdError(const std::string& what) : Error(ErrorClass::Data, what) {}
};

class EmptyCandidateError : public Error {
 public:
  explicit EmptyCandidateError(const std::string& what) : Error(ErrorClass::Data, what) {}
};

class SingularSystemError : public Error {
 public:
  explicit SingularSystemError(const std::string& what) : Error(ErrorClass::Numerical, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorClass::Numerical, what) {}
};

class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& what) : Error(ErrorClass::Config, what) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& what) : Error(ErrorClass::Config, what) {}
};

}  // namespace recaudit
