#pragma once

#include <stdexcept>
#include <string>

namespace hteqtl {

// Bad or missing user input (files, arguments, malformed data). CLI exit code 2.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Mathematically impossible request: non-PD matrix, infeasible probit cell,
// degenerate family or truth. CLI exit code 3.
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (dimension mismatch etc).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// An internal invariant failed (e.g. EM likelihood decreased).
class InternalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace hteqtl
