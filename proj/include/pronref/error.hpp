#pragma once

#include <stdexcept>
#include <string>

namespace pronref {

/// Base for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. The CLI maps this to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad invocation or configuration. The CLI maps this to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace pronref
