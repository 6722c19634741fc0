#pragma once

#include <stdexcept>
#include <string>

namespace codecot {

// Base of every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage or configuration value.
class UsageError : public Error {
 public:
  using Error::Error;
};

// The environment cannot support the requested work: missing cassette,
// missing runtime, unwritable output directory.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace codecot
