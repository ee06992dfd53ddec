#pragma once

#include <stdexcept>
#include <string>

namespace fcca {

// Base of every typed error raised by the library. Callers that only need
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values: non-finite numbers, mismatched sizes, bad indices.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fcca
