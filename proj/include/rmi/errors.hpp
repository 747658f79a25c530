#pragma once

#include <stdexcept>
#include <string>

namespace rmi {

/// Base of all library errors. exit_code() maps the failure onto the CLI's
/// process status (1 usage, 2 infeasible/overflow, 3 internal invariant).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 3; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 1; }
};

class ParseError : public InvalidArgument {
 public:
  ParseError(const std::string& source, int line, const std::string& what)
      : InvalidArgument(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// A configured size or iteration limit was hit.
class CapExceeded : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class Infeasible : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  int exit_code() const override { return 2; }
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Signals a bug: a contract between modules was broken.
class InvariantViolation : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

}  // namespace rmi
