#pragma once

#include <stdexcept>
#include <string>

namespace dmq {

/// Malformed or non-finite input data (empty sample sets, dimension mismatch, NaN).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition on an argument does not hold (e.g. asymmetric matrix).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range or inconsistent numeric parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotPsdError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A collaborator broke its contract, e.g. a policy returned an action outside [0, K).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A run-time invariant of the learner was breached (policy-set safety cap, norm bound,
/// recursion depth). Always indicates misconfiguration or a bug.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dmq
