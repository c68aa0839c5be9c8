#pragma once

#include <stdexcept>
#include <string>

namespace landscape {

// Base for every error the toolkit raises. `kind()` is the stable
// machine-readable tag used by the CLI error record.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class ValueError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "value"; }
};

// Non-finite values in a forward pass, loss divergence, bad finite-difference
// evaluations.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

class StateError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "state"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  const char* kind() const noexcept override { return "config"; }
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace landscape
