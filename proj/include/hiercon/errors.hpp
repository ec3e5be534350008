#pragma once

#include <stdexcept>
#include <string>

namespace hiercon {

/// Raised when an input lies outside the domain of a formula (inadmissible
/// payment rates, invalid worker parameters, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when an optimization problem has no feasible candidate.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hiercon
