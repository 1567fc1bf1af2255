#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace noisycon {

/// A numeric argument outside its allowed range (eta <= 0, p outside (0,1), ...).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structured input (edge list, spin string) that failed validation.
/// Carries every offending item, not only the first.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(const std::string& what, std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Request exceeds one of the exact-enumeration caps.
class ResourceLimit : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Stationary distribution requested for a chain with more than one closed class.
class NotErgodic : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decay fit window too short to estimate anything.
class InsufficientSignal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-form evaluation outside the regime where the formula holds.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace noisycon
