#pragma once

#include <stdexcept>
#include <string>

namespace nsb {

/// Base class for every error raised by the library. `exit_code()` is the
/// process exit status the command-line front end maps the error to.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration, precondition or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Non-finite values, solver blow-up.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// File missing, unreadable, malformed or not writable.
class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace nsb
