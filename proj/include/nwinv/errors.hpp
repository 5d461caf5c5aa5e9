#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nwinv {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's arity rules.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's mathematical domain (sqrt/log of a
// negative, non-finite objective, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition that is not a shape or config issue.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A support set cannot cover a required label. env < 0 means the
// requirement was not environment-conditioned.
class CoverageError : public Error {
 public:
  CoverageError(int env, int label, const std::string& what)
      : Error(what), env_(env), label_(label) {}

  int env() const { return env_; }
  int label() const { return label_; }

 private:
  int env_;
  int label_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace nwinv
