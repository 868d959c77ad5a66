#pragma once

#include <stdexcept>
#include <string>

namespace qest {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or schema-violating configuration (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A precondition or validation check failed (exit code 2).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A numerical routine did not converge or produced non-finite values (exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw PreconditionError(what);
}

}  // namespace qest
