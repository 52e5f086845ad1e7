#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace csisniff {

// Root of everything this library throws.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Caller-supplied input is wrong: bad parameters, malformed files, illegal
// state transitions. The CLI maps these to exit code 1.
class ValidationError : public Error
{
public:
  using Error::Error;
};

// Environment failures: I/O, network, timeouts. The CLI maps these to exit code 2.
class RuntimeFailure : public Error
{
public:
  using Error::Error;
};

class ConfigError : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

// Shape or range violation in a data structure or binary container.
class StructuralError : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError
{
public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what)
      , line_(line)
  {
  }

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class NoFramesError : public ValidationError
{
public:
  NoFramesError()
      : ValidationError("no frames left after device filtering")
  {
  }
};

}  // namespace csisniff
