#pragma once

#include <stdexcept>
#include <string>

namespace planlab {

// Base of every error raised by the library. Each subclass corresponds to one
// failure mode that callers may want to catch separately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidAction : public Error {
 public:
  using Error::Error;
};

class PolicyStateMissing : public Error {
 public:
  using Error::Error;
};

class StateBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class GoalUnreachable : public Error {
 public:
  using Error::Error;
};

class InfeasibleLayout : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class RatioUndefined : public Error {
 public:
  using Error::Error;
};

class SupportMismatch : public Error {
 public:
  using Error::Error;
};

class ExpertCoverageMissing : public Error {
 public:
  using Error::Error;
};

class UnreachableStart : public Error {
 public:
  using Error::Error;
};

// Malformed config files, CLI arguments and serialized artifacts.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace planlab
