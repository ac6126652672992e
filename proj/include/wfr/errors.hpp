#pragma once

#include <stdexcept>
#include <string>

namespace wfr {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SizingError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Endpoints violate the path constraint, or a path constructor's
// preconditions do not hold for the given data.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

// A small dense system (e.g. a constraint Gram matrix) is singular or too
// ill-conditioned to solve reliably.
class IllConditionedError : public Error {
 public:
  using Error::Error;
};

// A run configuration document is malformed, has unknown keys, or holds
// values of the wrong type. The message names the offending field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace wfr
